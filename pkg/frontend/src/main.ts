// Browser wiring: connects the client to DOM panels. Endpoint and session
// come from the query string: ?endpoint=http://127.0.0.1:8600&session=<id>
// (session defaults to the first session reported by /health).

import { SteerClient } from "./client.js";
import { annotationXs, linePath, trajectoryPath, wrappedPhasePath, ChartSpan } from "./charts.js";
import { ControlState } from "./controls.js";
import { SessionView } from "./view.js";
import type { PhaseMode } from "./types.js";

const params = new URLSearchParams(window.location.search);
const endpoint = params.get("endpoint") ?? "http://127.0.0.1:8600";
const capacity = Number(params.get("buffer") ?? "5000");

const controls = new ControlState();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const SPAN: ChartSpan = { width: 800, height: 120, yMin: 0, yMax: 1 };

function render(view: SessionView): void {
  el("connection").textContent = view.connection;
  const frames = view.buffer.all();
  const latest = view.buffer.latest();
  if (latest) {
    el("current-frame").textContent = String(latest.packet.t);
    // byte-faithful: show the wire tokens, not re-rendered floats
    el("current-r").textContent = latest.rawR;
    el("current-phase").textContent = latest.rawMeanPhase;
    el("current-lambda").textContent = latest.rawLambdaEstimate || "-";
    el("current-mode").textContent = latest.packet.mode;
  }

  const rPts = frames.map((f) => ({ x: f.packet.t, y: f.packet.R }));
  el<HTMLElement>("r-path").setAttribute("d", linePath(rPts, SPAN));

  const phasePts = frames.map((f) => ({ x: f.packet.t, y: f.packet.mean_phase }));
  el<HTMLElement>("phase-path").setAttribute(
    "d", wrappedPhasePath(phasePts, { ...SPAN, yMin: -Math.PI, yMax: Math.PI }));

  const lamPts = frames
    .filter((f) => f.packet.lambda_estimate !== null)
    .map((f) => ({ x: f.packet.t, y: f.packet.lambda_estimate as number }));
  el<HTMLElement>("lambda-path").setAttribute(
    "d", linePath(lamPts, { ...SPAN, yMin: 0.1, yMax: 0.4 }));

  const outputs = frames.map((f) => f.packet.output);
  el<HTMLElement>("trajectory-path").setAttribute(
    "d", trajectoryPath(outputs, { width: 300, height: 300, yMin: -5, yMax: 5 }));

  if (frames.length > 0) {
    const first = frames[0].packet.t;
    const last = frames[frames.length - 1].packet.t;
    const marks = annotationXs(view.annotations.map((a) => a.frame), first, last, SPAN.width);
    el("annotations").innerHTML = marks
      .map((x) => `<line x1="${x.toFixed(2)}" y1="0" x2="${x.toFixed(2)}" y2="120" class="mark"/>`)
      .join("");
    const gapMarks = annotationXs(view.buffer.gaps.map((g) => g.afterFrame), first, last, SPAN.width);
    el("gaps").innerHTML = gapMarks
      .map((x) => `<line x1="${x.toFixed(2)}" y1="0" x2="${x.toFixed(2)}" y2="120" class="gap"/>`)
      .join("");
  }

  el("pending").textContent = view.hasPending() ? "waiting for ack..." : "";
  (el<HTMLButtonElement>("send-omega")).disabled = view.hasPending();
  el("log").textContent = view.annotations
    .slice(-8)
    .map((a) => `frame ${a.frame}: ${a.label}`)
    .join("\n");
}

async function start(): Promise<void> {
  let sessionId = params.get("session");
  if (!sessionId) {
    const health = await (await fetch(`${endpoint}/health`)).json();
    sessionId = health.sessions?.[0]?.session_id;
  }
  if (!sessionId) {
    el("connection").textContent = "no session available";
    return;
  }
  const client = new SteerClient(endpoint, sessionId, {
    bufferCapacity: capacity,
    onUpdate: render,
  });

  for (const mode of ["coupled", "forced", "frozen"] as PhaseMode[]) {
    el<HTMLButtonElement>(`mode-${mode}`).addEventListener("click", () => {
      void client.dispatch(controls.commandForMode(mode));
    });
  }
  el<HTMLButtonElement>("send-omega").addEventListener("click", () => {
    const value = Number(el<HTMLInputElement>("omega").value);
    if (controls.setOmega(value)) void client.dispatch(controls.commandForOmega());
  });
  el<HTMLButtonElement>("freeze").addEventListener("click", () => {
    void client.dispatch(controls.commandForFreeze());
  });
  el<HTMLButtonElement>("switch-input").addEventListener("click", () => {
    const raw = el<HTMLSelectElement>("lambda-select").value;
    const lambda = raw === "closed" ? null : Number(raw);
    void client.dispatch(controls.commandForInput(lambda));
  });

  client.run().catch(() => {
    el("connection").textContent = "failed";
  });
}

void start();
