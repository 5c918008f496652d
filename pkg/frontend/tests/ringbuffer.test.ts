import { describe, expect, it } from "vitest";

import { FrameBuffer } from "../src/ringbuffer.js";
import type { ReceivedFrame } from "../src/types.js";

function frame(t: number): ReceivedFrame {
  return {
    packet: { t, R: 0.9, mean_phase: 0, output: [0, 0, 0], mode: "frozen",
              lambda_estimate: null },
    rawLine: `{"t": ${t}}`,
    rawR: "0.9",
    rawMeanPhase: "0",
    rawLambdaEstimate: "null",
  };
}

describe("FrameBuffer", () => {
  it("keeps at most capacity frames, dropping the oldest", () => {
    const buf = new FrameBuffer(5000);
    for (let t = 0; t < 5001; t++) buf.push(frame(t));
    expect(buf.length).toBe(5000);
    expect(buf.firstFrameIndex()).toBe(1);
    expect(buf.latest()!.packet.t).toBe(5000);
  });

  it("rejects stale or duplicate frames", () => {
    const buf = new FrameBuffer(10);
    expect(buf.push(frame(5))).toBe(true);
    expect(buf.push(frame(5))).toBe(false);
    expect(buf.push(frame(4))).toBe(false);
    expect(buf.length).toBe(1);
  });

  it("records a gap marker on frame jumps", () => {
    const buf = new FrameBuffer(10);
    buf.push(frame(1));
    buf.push(frame(2));
    buf.push(frame(9));
    expect(buf.gaps).toEqual([{ afterFrame: 2 }]);
  });

  it("single packet renders without error", () => {
    const buf = new FrameBuffer(10);
    buf.push(frame(0));
    expect(buf.latest()!.packet.t).toBe(0);
    expect(buf.gaps).toEqual([]);
  });
});
