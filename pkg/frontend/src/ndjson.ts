// Incremental newline-delimited JSON decoding for streamed FramePackets.

import type { FramePacket, ReceivedFrame } from "./types.js";

/** Buffers partial chunks and yields complete lines. */
export class LineSplitter {
  private buffer = "";

  push(chunk: string): string[] {
    this.buffer += chunk;
    const parts = this.buffer.split("\n");
    this.buffer = parts.pop() ?? "";
    return parts.filter((p) => p.length > 0);
  }

  /** Any trailing partial line (useful on stream end). */
  flush(): string | null {
    const rest = this.buffer;
    this.buffer = "";
    return rest.length > 0 ? rest : null;
  }
}

function rawField(line: string, field: string): string {
  const match = line.match(new RegExp(`"${field}"\\s*:\\s*([^,}]+)`));
  return match ? match[1].trim() : "";
}

/**
 * Parse one NDJSON line into a frame, keeping the raw numeric tokens.
 * Returns null for non-frame lines (e.g. the session-ended event).
 */
export function parseFrameLine(line: string): ReceivedFrame | null {
  let value: unknown;
  try {
    value = JSON.parse(line);
  } catch {
    return null;
  }
  if (typeof value !== "object" || value === null || !("t" in value)) {
    return null;
  }
  const packet = value as FramePacket;
  return {
    packet,
    rawLine: line,
    rawR: rawField(line, "R"),
    rawMeanPhase: rawField(line, "mean_phase"),
    rawLambdaEstimate: rawField(line, "lambda_estimate"),
  };
}

export function isSessionEnded(line: string): boolean {
  try {
    const value = JSON.parse(line);
    return typeof value === "object" && value !== null &&
      (value as { event?: string }).event === "session-ended";
  } catch {
    return false;
  }
}
