// Bounded frame store ordered by frame index, with explicit gap markers.

import type { ReceivedFrame } from "./types.js";

export interface Gap {
  /** Frame index right before the discontinuity. */
  afterFrame: number;
}

/**
 * Keeps the most recent `capacity` frames. Out-of-order packets are
 * rejected rather than reordered (the stream contract is monotone per
 * subscriber); a jump of more than one frame records a gap marker so the
 * charts can show where a reconnect lost data.
 */
export class FrameBuffer {
  private frames: ReceivedFrame[] = [];
  readonly gaps: Gap[] = [];

  constructor(readonly capacity: number = 5000) {
    if (capacity < 1) throw new Error("capacity must be >= 1");
  }

  push(frame: ReceivedFrame): boolean {
    const last = this.frames[this.frames.length - 1];
    if (last !== undefined) {
      if (frame.packet.t <= last.packet.t) return false;
      if (frame.packet.t > last.packet.t + 1) {
        this.gaps.push({ afterFrame: last.packet.t });
      }
    }
    this.frames.push(frame);
    if (this.frames.length > this.capacity) {
      this.frames.splice(0, this.frames.length - this.capacity);
    }
    return true;
  }

  get length(): number {
    return this.frames.length;
  }

  latest(): ReceivedFrame | undefined {
    return this.frames[this.frames.length - 1];
  }

  all(): readonly ReceivedFrame[] {
    return this.frames;
  }

  firstFrameIndex(): number | null {
    return this.frames.length ? this.frames[0].packet.t : null;
  }
}
