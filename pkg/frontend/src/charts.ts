// Pure chart geometry: series -> SVG path strings. No DOM access here so
// the wrap handling and annotation placement are unit-testable.

export interface ChartSpan {
  width: number;
  height: number;
  yMin: number;
  yMax: number;
}

export interface Point {
  x: number;  // frame index
  y: number;
}

function scaleX(x: number, x0: number, x1: number, width: number): number {
  if (x1 === x0) return 0;
  return ((x - x0) / (x1 - x0)) * width;
}

function scaleY(y: number, span: ChartSpan): number {
  if (span.yMax === span.yMin) return span.height / 2;
  return span.height - ((y - span.yMin) / (span.yMax - span.yMin)) * span.height;
}

/** One polyline through all points (plain series like R(t)). */
export function linePath(points: Point[], span: ChartSpan): string {
  if (points.length === 0) return "";
  const x0 = points[0].x;
  const x1 = points[points.length - 1].x;
  return points
    .map((p, i) => `${i === 0 ? "M" : "L"}${scaleX(p.x, x0, x1, span.width).toFixed(2)},${scaleY(p.y, span).toFixed(2)}`)
    .join(" ");
}

/**
 * Wrapped-angle series: split the polyline wherever consecutive samples
 * jump by more than pi, so the +/-pi seam never draws a vertical artifact.
 */
export function wrappedPhasePath(points: Point[], span: ChartSpan): string {
  if (points.length === 0) return "";
  const x0 = points[0].x;
  const x1 = points[points.length - 1].x;
  const segments: string[] = [];
  let pen = "M";
  for (let i = 0; i < points.length; i++) {
    if (i > 0 && Math.abs(points[i].y - points[i - 1].y) > Math.PI) {
      pen = "M";  // lift the pen across the seam
    }
    segments.push(
      `${pen}${scaleX(points[i].x, x0, x1, span.width).toFixed(2)},${scaleY(points[i].y, span).toFixed(2)}`);
    pen = "L";
  }
  return segments.join(" ");
}

/** Count discontinuous segments in a path string (for tests and legends). */
export function segmentCount(path: string): number {
  return (path.match(/M/g) ?? []).length;
}

/** X pixel positions for annotation markers at acknowledged frames. */
export function annotationXs(frames: number[], firstFrame: number,
                             lastFrame: number, width: number): number[] {
  return frames
    .filter((f) => f >= firstFrame && f <= lastFrame)
    .map((f) => scaleX(f, firstFrame, lastFrame, width));
}

/** 2D projection of the output trajectory (first two components). */
export function trajectoryPath(outputs: number[][], span: ChartSpan): string {
  const pts = outputs.filter((o) => o.length >= 2);
  if (pts.length === 0) return "";
  const xs = pts.map((o) => o[0]);
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs);
  return pts
    .map((o, i) => {
      const px = xMax === xMin ? 0 : ((o[0] - xMin) / (xMax - xMin)) * span.width;
      return `${i === 0 ? "M" : "L"}${px.toFixed(2)},${scaleY(o[1], span).toFixed(2)}`;
    })
    .join(" ");
}
