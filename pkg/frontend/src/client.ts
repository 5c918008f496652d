// Streaming client: consumes the steerd NDJSON feed and posts commands.

import { LineSplitter, isSessionEnded, parseFrameLine } from "./ndjson.js";
import { SessionView } from "./view.js";
import type { CommandAck, SteerCommand } from "./types.js";

export interface ClientOptions {
  bufferCapacity?: number;
  reconnectDelayMs?: number;
  maxReconnects?: number;
  onUpdate?: (view: SessionView) => void;
}

export class SteerClient {
  readonly view: SessionView;
  private stopped = false;
  private reconnects = 0;
  private reader: ReadableStreamDefaultReader<Uint8Array> | null = null;

  constructor(readonly endpoint: string, readonly sessionId: string,
              readonly options: ClientOptions = {}) {
    this.view = new SessionView(options.bufferCapacity ?? 5000);
  }

  streamUrl(): string {
    return `${this.endpoint}/sessions/${this.sessionId}/stream`;
  }

  commandUrl(): string {
    return `${this.endpoint}/sessions/${this.sessionId}/command`;
  }

  stop(): void {
    this.stopped = true;
    void this.reader?.cancel().catch(() => undefined);
  }

  /** Sever the current stream (the run loop will reconnect). */
  dropConnection(): void {
    void this.reader?.cancel().catch(() => undefined);
  }

  private notify(): void {
    this.options.onUpdate?.(this.view);
  }

  /** Consume the stream until the session ends or reconnects are exhausted. */
  async run(): Promise<void> {
    const maxReconnects = this.options.maxReconnects ?? 5;
    while (!this.stopped) {
      try {
        const ended = await this.consumeOnce();
        if (ended) {
          this.view.connection = "ended";
          this.notify();
          return;
        }
      } catch {
        // fall through to the reconnect path
      }
      if (this.stopped) return;
      this.reconnects += 1;
      if (this.reconnects > maxReconnects) {
        this.view.connection = "failed";
        this.notify();
        return;
      }
      this.view.connection = "reconnecting";
      this.notify();
      await sleep(this.options.reconnectDelayMs ?? 250);
    }
  }

  private async consumeOnce(): Promise<boolean> {
    const response = await fetch(this.streamUrl());
    if (!response.ok || response.body === null) {
      throw new Error(`stream request failed: ${response.status}`);
    }
    const reader = response.body.getReader();
    this.reader = reader;
    const decoder = new TextDecoder();
    const splitter = new LineSplitter();
    try {
      for (;;) {
        const { value, done } = await reader.read();
        if (done) return false;  // connection dropped without an end event
        for (const line of splitter.push(decoder.decode(value, { stream: true }))) {
          if (isSessionEnded(line)) return true;
          const frame = parseFrameLine(line);
          if (frame) this.view.onFrame(frame);
        }
        this.notify();
      }
    } finally {
      this.reader = null;
    }
  }

  /** Post a command; resolves the pending entry with the acknowledgment. */
  async dispatch(command: SteerCommand): Promise<CommandAck> {
    const entry = this.view.issue(command);
    this.notify();
    let ack: CommandAck;
    try {
      const response = await fetch(this.commandUrl(), {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(command),
      });
      ack = (await response.json()) as CommandAck;
    } catch (err) {
      ack = { status: "error", error: String(err) };
    }
    this.view.resolve(entry.id, ack);
    this.notify();
    return ack;
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
