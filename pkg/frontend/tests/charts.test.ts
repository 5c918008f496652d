import { describe, expect, it } from "vitest";

import {
  annotationXs,
  linePath,
  segmentCount,
  trajectoryPath,
  wrappedPhasePath,
} from "../src/charts.js";

const SPAN = { width: 100, height: 50, yMin: -Math.PI, yMax: Math.PI };

describe("linePath", () => {
  it("builds one segment", () => {
    const path = linePath([{ x: 0, y: 0 }, { x: 1, y: 1 }, { x: 2, y: 0 }],
                          { width: 100, height: 50, yMin: 0, yMax: 1 });
    expect(segmentCount(path)).toBe(1);
    expect(path.startsWith("M0.00,50.00")).toBe(true);
  });

  it("empty series yields empty path", () => {
    expect(linePath([], SPAN)).toBe("");
  });
});

describe("wrappedPhasePath", () => {
  it("splits at the +/-pi seam instead of drawing a vertical jump", () => {
    // a phase ramp crossing the seam twice
    const points = [];
    let phi = 2.8;
    for (let t = 0; t < 40; t++) {
      points.push({ x: t, y: phi });
      phi += 0.25;
      if (phi >= Math.PI) phi -= 2 * Math.PI;
    }
    const path = wrappedPhasePath(points, SPAN);
    expect(segmentCount(path)).toBeGreaterThanOrEqual(3);
    // no segment may span more than pi vertically between adjacent samples
    const ys = points.map((p) => p.y);
    for (let i = 1; i < ys.length; i++) {
      if (Math.abs(ys[i] - ys[i - 1]) > Math.PI) {
        // the path must contain a fresh M exactly at this sample
        const xPix = ((points[i].x - points[0].x) /
          (points[points.length - 1].x - points[0].x)) * SPAN.width;
        expect(path).toContain(`M${xPix.toFixed(2)}`);
      }
    }
  });

  it("continuous series stays one segment", () => {
    const points = Array.from({ length: 20 }, (_, t) => ({ x: t, y: Math.sin(t / 5) }));
    expect(segmentCount(wrappedPhasePath(points, SPAN))).toBe(1);
  });
});

describe("annotationXs", () => {
  it("places markers inside the visible frame window only", () => {
    const xs = annotationXs([5, 50, 95, 200], 0, 100, 100);
    expect(xs).toEqual([5, 50, 95]);
  });
});

describe("trajectoryPath", () => {
  it("projects first two components", () => {
    const path = trajectoryPath([[0, 0, 9], [1, 1, 9], [2, 0, 9]],
                                { width: 100, height: 100, yMin: -1, yMax: 1 });
    expect(segmentCount(path)).toBe(1);
  });

  it("empty outputs yield empty path", () => {
    expect(trajectoryPath([], { width: 10, height: 10, yMin: 0, yMax: 1 })).toBe("");
  });
});
