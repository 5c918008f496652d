// Session view state: what the dashboard knows about one live session.

import { FrameBuffer } from "./ringbuffer.js";
import type { CommandAck, ReceivedFrame, SteerCommand } from "./types.js";

export type ConnectionState = "connecting" | "live" | "reconnecting" | "ended" | "failed";

export interface PendingCommand {
  id: number;
  command: SteerCommand;
  issuedAt: number;
  status: "pending" | "acknowledged" | "errored";
  appliedFrame?: number;
  error?: string;
}

export interface Annotation {
  frame: number;
  label: string;
}

export class SessionView {
  readonly buffer: FrameBuffer;
  connection: ConnectionState = "connecting";
  readonly pending: PendingCommand[] = [];
  readonly annotations: Annotation[] = [];
  private nextId = 1;

  constructor(capacity = 5000) {
    this.buffer = new FrameBuffer(capacity);
  }

  onFrame(frame: ReceivedFrame): void {
    this.buffer.push(frame);
    if (this.connection !== "ended") this.connection = "live";
  }

  /** True while any command awaits its acknowledgment (controls disable). */
  hasPending(): boolean {
    return this.pending.some((p) => p.status === "pending");
  }

  issue(command: SteerCommand): PendingCommand {
    const entry: PendingCommand = {
      id: this.nextId++,
      command,
      issuedAt: Date.now(),
      status: "pending",
    };
    this.pending.push(entry);
    return entry;
  }

  resolve(id: number, ack: CommandAck): void {
    const entry = this.pending.find((p) => p.id === id);
    if (!entry) return;
    if (ack.status === "ok" && ack.applied_frame !== undefined) {
      entry.status = "acknowledged";
      entry.appliedFrame = ack.applied_frame;
      this.annotations.push({
        frame: ack.applied_frame,
        label: describeCommand(entry.command),
      });
    } else {
      entry.status = "errored";
      entry.error = ack.detail ?? ack.error ?? "command failed";
    }
  }
}

export function describeCommand(command: SteerCommand): string {
  switch (command.kind) {
    case "set_mode":
      return `mode=${command.mode}`;
    case "set_omega":
      return `omega=${command.value}`;
    case "freeze":
      return "freeze";
    case "switch_input":
      return command.lambda === null ? "input=closed-loop" : `input=${command.lambda}`;
  }
}
