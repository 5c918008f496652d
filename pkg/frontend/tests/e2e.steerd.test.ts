// End-to-end against the real steerd service: a scripted session drives the
// same client the dashboard uses. Requires python3 + the phaselink package
// (built automatically; cached under .e2e/).

import { execFileSync, spawn, ChildProcess } from "node:child_process";
import { existsSync, mkdirSync, writeFileSync } from "node:fs";
import path from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { SteerClient } from "../src/client.js";
import { annotationXs } from "../src/charts.js";

const ROOT = path.resolve(__dirname, "..");
const E2E_DIR = path.join(ROOT, ".e2e");
const BUNDLE = path.join(E2E_DIR, "run", "bundle");

const TINY_CONFIG = {
  experiment: "twin_train",
  system: { seed: 2 },
  protocol: { dwell_min: 150, dwell_max: 300, total_frames: 3001, schedule_seed: 123 },
  reservoir: { n_nodes: 60, node_density: 0.1, seed: 7 },
  phase: { phase_density: 0.1 },
  train: { warmup_steps: 200, train_steps: 2800, predict_warmup_steps: 400 },
  prediction: { test_frames: 1500, test_seeds: { "0.18": 31, "0.29": 37 } },
  targeting: { sweep_omega: 0.01, sweep_steps: 660, r_equilibrium_tol: 0.05,
               r_window: 100, min_equilibrium_steps: 200 },
};

let server: ChildProcess | null = null;
let endpoint = "";
let sessionId = "";

async function waitForLine(child: ChildProcess, pattern: RegExp,
                           timeoutMs = 60000): Promise<RegExpMatchArray> {
  return new Promise((resolve, reject) => {
    let buffer = "";
    const timer = setTimeout(() => reject(new Error(`timeout waiting for ${pattern}`)),
                             timeoutMs);
    child.stdout!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
      const match = buffer.match(pattern);
      if (match) {
        clearTimeout(timer);
        resolve(match);
      }
    });
    child.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`server exited early (code ${code}): ${buffer}`));
    });
  });
}

beforeAll(async () => {
  mkdirSync(E2E_DIR, { recursive: true });
  if (!existsSync(path.join(BUNDLE, "manifest.json"))) {
    const cfgPath = path.join(E2E_DIR, "tiny_twin.json");
    writeFileSync(cfgPath, JSON.stringify(TINY_CONFIG));
    execFileSync("python3", ["-m", "phaselink.cli", "train",
                             "--config", cfgPath, "--out", path.join(E2E_DIR, "run")],
                 { stdio: "pipe", timeout: 300_000 });
  }
  server = spawn("python3", ["-m", "phaselink.cli", "serve",
                             "--bundle", BUNDLE, "--port", "0", "--fps", "100"],
                 { stdio: ["ignore", "pipe", "pipe"] });
  const match = await waitForLine(server, /listening on 127\.0\.0\.1:(\d+) session (\w+)/);
  endpoint = `http://127.0.0.1:${match[1]}`;
  sessionId = match[2];
}, 300_000);

afterAll(() => {
  server?.kill();
});

async function collectFrames(client: SteerClient, n: number,
                             timeoutMs = 30000): Promise<void> {
  const start = Date.now();
  while (client.view.buffer.length < n) {
    if (Date.now() - start > timeoutMs) {
      throw new Error(`timed out with ${client.view.buffer.length}/${n} frames`);
    }
    await new Promise((r) => setTimeout(r, 25));
  }
}

describe("dashboard against a live steerd session", () => {
  it("streams, annotates commands at acknowledged frames, stays byte-faithful, reconnects",
     async () => {
    const client = new SteerClient(endpoint, sessionId, { reconnectDelayMs: 100 });
    const done = client.run();

    await collectFrames(client, 20);
    expect(client.view.connection).toBe("live");

    // displayed R is byte-for-byte the streamed token
    for (const frame of client.view.buffer.all()) {
      expect(frame.rawLine).toContain(`"R": ${frame.rawR}`);
      expect(Number(frame.rawR)).toBe(frame.packet.R);
    }

    // dispatched commands annotate the charts at the acknowledged frames
    const ack1 = await client.dispatch({ kind: "set_mode", mode: "forced" });
    expect(ack1.status).toBe("ok");
    const ack2 = await client.dispatch({ kind: "set_omega", value: 0.02 });
    expect(ack2.status).toBe("ok");
    expect(client.view.annotations.map((a) => a.frame))
      .toEqual([ack1.applied_frame, ack2.applied_frame]);

    // the mean phase advances ~omega per frame once the command took effect
    const effective = Math.max(ack1.applied_frame!, ack2.applied_frame!);
    await collectFrames(client, client.view.buffer.length + 120);
    const after = client.view.buffer.all()
      .filter((f) => f.packet.t > effective)
      .map((f) => f.packet.mean_phase);
    expect(after.length).toBeGreaterThan(60);
    const gaps = [];
    for (let i = 1; i < after.length; i++) {
      let d = after[i] - after[i - 1];
      if (d < -Math.PI) d += 2 * Math.PI;
      if (d > Math.PI) d -= 2 * Math.PI;
      gaps.push(d);
    }
    const meanGap = gaps.reduce((a, b) => a + b, 0) / gaps.length;
    expect(meanGap).toBeCloseTo(0.02, 3);

    // freeze flatlines the mean phase after its acknowledged frame
    const ack3 = await client.dispatch({ kind: "freeze" });
    expect(ack3.status).toBe("ok");
    await collectFrames(client, client.view.buffer.length + 60);
    const frozen = client.view.buffer.all()
      .filter((f) => f.packet.t > ack3.applied_frame!)
      .map((f) => f.packet.mean_phase);
    expect(new Set(frozen).size).toBe(1);
    expect(client.view.annotations.at(-1)!.frame).toBe(ack3.applied_frame);

    // annotations land inside the chart window
    const first = client.view.buffer.firstFrameIndex()!;
    const last = client.view.buffer.latest()!.packet.t;
    const marks = annotationXs(client.view.annotations.map((a) => a.frame),
                               first, last, 800);
    expect(marks.length).toBe(3);

    // reconnect: sever the stream; the client resumes from the live frame
    const beforeDrop = client.view.buffer.latest()!.packet.t;
    client.dropConnection();
    await collectFrames(client, client.view.buffer.length + 30, 30000);
    const lastGap = client.view.buffer.gaps.at(-1);
    expect(lastGap).toBeDefined();
    expect(lastGap!.afterFrame).toBeGreaterThanOrEqual(beforeDrop - 1);
    const ts = client.view.buffer.all().map((f) => f.packet.t);
    for (let i = 1; i < ts.length; i++) expect(ts[i]).toBeGreaterThan(ts[i - 1]);

    client.stop();
    await done;
  }, 120_000);

  it("invalid command is surfaced without crashing the stream", async () => {
    const client = new SteerClient(endpoint, sessionId, { reconnectDelayMs: 100 });
    const done = client.run();
    await collectFrames(client, 5);
    const ack = await client.dispatch({ kind: "switch_input", lambda: 42.0 });
    expect(ack.status).toBe("error");
    expect(client.view.pending.at(-1)!.status).toBe("errored");
    await collectFrames(client, client.view.buffer.length + 10);
    client.stop();
    await done;
  }, 60_000);
});
