"""Live steering service for a trained twin.

One session owns a closed-loop twin advanced by a single producer thread.
Steering commands are queued and applied at frame boundaries only, which
keeps a session bit-reproducible from its replay log (frame index +
command). Subscribers get newline-delimited JSON FramePackets over HTTP;
slow readers lose oldest frames from a bounded per-subscriber queue but
never see indices out of order.

Wire formats:
  FramePacket: {"t": int, "R": float, "mean_phase": float,
                "output": [float...], "mode": "coupled"|"forced"|"frozen",
                "lambda_estimate": float|null}
  SteerCommand: {"kind": "set_mode", "mode": ...} | {"kind": "set_omega",
                "value": x} | {"kind": "freeze"} |
                {"kind": "switch_input", "lambda": x|null}
Acks: {"status": "ok", "applied_frame": k} or {"status": "error", ...}.
"""

from __future__ import annotations

import json
import math
import threading
import time
import uuid
from collections import deque
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from .dynsys import (
    DegenerateTrajectoryError,
    SystemKind,
    estimate_thomas_b,
    rk4_step,
    thomas_deriv,
    lorenz_deriv,
    Trajectory,
)
from .errors import (
    BundleError,
    InvalidCommandError,
    PortInUseError,
    SessionError,
)
from .learner import COUPLED, FROZEN, PHASE_MODES, TwinSession, target_mean_phase
from .phasenet import PhaseState
from .reservoir import ReservoirState
from .serialize import ModelBundle, state_key, load_model_bundle

LAMBDA_WINDOW = 300


@dataclass
class SessionConfig:
    state_lambda: float | None = None      # which stored state to warm onto
    seed: int = 17                         # phase-init seed for the warm-up
    fps: float = 30.0                      # wall-clock pacing; 0 = unpaced
    warmup: str = "target"                 # "target" or "equilibrate"
    autostart: bool = True
    max_frames: int | None = None
    lambda_range: tuple[float, float] = (0.05, 0.5)
    replay_dir: str | None = "steerd_replays"

    @classmethod
    def from_dict(cls, d: dict) -> "SessionConfig":
        kwargs = {}
        for key in ("state_lambda", "seed", "fps", "warmup", "autostart",
                    "max_frames", "replay_dir"):
            if key in d:
                kwargs[key] = d[key]
        if "lambda_range" in d:
            kwargs["lambda_range"] = tuple(d["lambda_range"])
        return cls(**kwargs)


class SessionEngine:
    """Deterministic twin loop; all RNG lives in seeded construction."""

    def __init__(self, bundle: ModelBundle, config: SessionConfig):
        self.bundle = bundle
        self.config = config
        self.w = bundle.w_out
        self.frame_dt = float(bundle.manifest.get("frame_dt", 1.0))
        self.sim_dt = float(bundle.manifest.get("dt", 0.05))
        self.record_every = int(bundle.manifest.get("record_every", 10))
        self.t = 0
        self.input_mode = "closed_loop"
        self.sim_state: np.ndarray | None = None
        self.sim_lambda: float | None = None
        self.outputs = deque(maxlen=LAMBDA_WINDOW)

        lambdas = bundle.state_lambdas
        if not lambdas:
            raise BundleError("bundle stores no state trajectories to warm on")
        lam = config.state_lambda if config.state_lambda is not None else lambdas[0]
        key = state_key(float(lam))
        if key not in bundle.state_trajectories:
            raise BundleError(f"bundle has no stored state for lambda {lam}")
        test = bundle.state_trajectories[key]

        self.session = TwinSession(
            bundle.rtopo, bundle.rparams, bundle.ptopo, bundle.pparams,
            ReservoirState.zeros(bundle.rparams.n_nodes),
            PhaseState.random(bundle.rtopo.n_links, seed=config.seed),
            phase_mode=COUPLED)

        if config.warmup == "target":
            res = target_mean_phase(test, self.session, self.w, bundle.targeting_cfg)
            start = res.frames_consumed
        else:
            tcfg = bundle.targeting_cfg
            recent: deque = deque(maxlen=tcfg.r_window)
            start = test.n_frames
            for k in range(test.n_frames):
                self.session.drive(test.frames[k])
                recent.append(self.session.order().R)
                if (len(recent) == tcfg.r_window
                        and float(np.std(recent)) < tcfg.r_equilibrium_tol):
                    start = k + 1
                    break
            self.session.phase_mode = FROZEN
        for k in range(start, test.n_frames):
            self.session.drive(test.frames[k])
        self.last_pred = self.w @ self.session.rstate.n

    # -- commands ---------------------------------------------------------

    def apply(self, cmd: dict) -> None:
        kind = cmd.get("kind")
        if kind == "set_mode":
            mode = cmd.get("mode")
            if mode not in PHASE_MODES:
                raise InvalidCommandError(f"unknown mode {mode!r}")
            self.session.phase_mode = mode
        elif kind == "set_omega":
            value = cmd.get("value")
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise InvalidCommandError("set_omega needs a finite value")
            self.session.g = float(value)
        elif kind == "freeze":
            self.session.phase_mode = FROZEN
            self.session.g = 0.0
        elif kind == "switch_input":
            lam = cmd.get("lambda")
            if lam is None:
                self.input_mode = "closed_loop"
                self.sim_state = None
                return
            lo, hi = self.config.lambda_range
            if not isinstance(lam, (int, float)) or not (lo <= lam <= hi):
                raise InvalidCommandError(
                    f"switch_input lambda {lam!r} outside valid range [{lo}, {hi}]")
            if self.bundle.system.kind == SystemKind.MACKEY_GLASS:
                raise InvalidCommandError(
                    "switch_input requires an ODE system (delay state unavailable)")
            self.input_mode = "open_loop"
            self.sim_lambda = float(lam)
            if self.sim_state is None:
                self.sim_state = np.array(self.last_pred, dtype=float)
        else:
            raise InvalidCommandError(f"unknown command kind {kind!r}")

    def _next_input(self) -> np.ndarray:
        if self.input_mode == "closed_loop":
            return self.last_pred
        spec = self.bundle.system
        state = self.sim_state
        for _ in range(self.record_every):
            if spec.kind == SystemKind.THOMAS:
                state = rk4_step(lambda s: thomas_deriv(s, self.sim_lambda),
                                 state, self.sim_dt)
            else:
                state = rk4_step(
                    lambda s: lorenz_deriv(s, spec.sigma, self.sim_lambda, spec.beta_lorenz),
                    state, self.sim_dt)
        self.sim_state = state
        return state

    def step(self) -> dict:
        u = self._next_input()
        self.session.drive(u)
        pred = self.w @ self.session.rstate.n
        self.last_pred = pred
        self.outputs.append(np.asarray(pred, dtype=float))
        sample = self.session.order()
        lam_est = None
        if len(self.outputs) == LAMBDA_WINDOW and len(pred) == 3:
            try:
                traj = Trajectory(self.frame_dt, np.array(self.outputs),
                                  np.full(LAMBDA_WINDOW, np.nan))
                lam_est = estimate_thomas_b(traj, self.frame_dt)
            except DegenerateTrajectoryError:
                lam_est = None
        packet = {
            "t": self.t,
            "R": float(sample.R),
            "mean_phase": float(sample.mean_phase),
            "output": [float(v) for v in pred],
            "mode": self.session.phase_mode,
            "lambda_estimate": lam_est,
        }
        self.t += 1
        return packet


def replay_session(bundle: ModelBundle, config: SessionConfig,
                   script: list[dict], n_frames: int) -> list[dict]:
    """Run an engine applying scripted commands at their recorded frames."""
    engine = SessionEngine(bundle, config)
    by_frame: dict[int, list[dict]] = {}
    for entry in script:
        by_frame.setdefault(int(entry["frame"]), []).append(entry["command"])
    packets = []
    for _ in range(n_frames):
        for cmd in by_frame.get(engine.t, []):
            engine.apply(cmd)
        packets.append(engine.step())
    return packets


class _Subscriber:
    def __init__(self, maxlen: int):
        self.queue: deque = deque(maxlen=maxlen)
        self.cond = threading.Condition()
        self.closed = False

    def push(self, packet):
        with self.cond:
            self.queue.append(packet)   # maxlen drops the oldest
            self.cond.notify()

    def close(self):
        with self.cond:
            self.closed = True
            self.cond.notify()


class SteerSession:
    """Producer thread around a SessionEngine plus command/subscriber plumbing."""

    def __init__(self, engine: SessionEngine, session_id: str,
                 fps: float, autostart: bool = True,
                 max_frames: int | None = None, replay_dir: str | None = None):
        self.engine = engine
        self.session_id = session_id
        self.fps = fps
        self.max_frames = max_frames
        self._commands: deque = deque()
        self._cmd_lock = threading.Lock()
        self._subs: list[_Subscriber] = []
        self._subs_lock = threading.Lock()
        self._stop = threading.Event()
        self._started = threading.Event()
        self.ended = threading.Event()
        self._replay_path = None
        if replay_dir is not None:
            rd = Path(replay_dir)
            rd.mkdir(parents=True, exist_ok=True)
            self._replay_path = rd / f"session_{session_id}_replay.jsonl"
            self._replay_path.write_text("")
        self._thread = threading.Thread(target=self._run, name=f"steerd-{session_id}",
                                        daemon=True)
        self._thread.start()
        if autostart:
            self._started.set()

    @property
    def frame(self) -> int:
        return self.engine.t

    def apply_command(self, cmd: dict, timeout: float = 30.0) -> int:
        if self.ended.is_set():
            raise SessionError("session has ended")
        done = threading.Event()
        box: dict = {}
        with self._cmd_lock:
            self._commands.append((cmd, box, done))
        self._started.set()  # a command wakes a not-yet-started session
        if not done.wait(timeout):
            raise SessionError("command was not applied in time")
        if "error" in box:
            raise box["error"]
        return box["applied_frame"]

    def subscribe(self, maxlen: int = 512) -> _Subscriber:
        sub = _Subscriber(maxlen)
        with self._subs_lock:
            self._subs.append(sub)
        self._started.set()
        return sub

    def unsubscribe(self, sub: _Subscriber) -> None:
        with self._subs_lock:
            if sub in self._subs:
                self._subs.remove(sub)

    def stop(self) -> None:
        self._stop.set()
        self._started.set()
        self._thread.join(timeout=10)

    def _apply_pending(self) -> None:
        while True:
            with self._cmd_lock:
                if not self._commands:
                    return
                cmd, box, done = self._commands.popleft()
            try:
                self.engine.apply(cmd)
                box["applied_frame"] = self.engine.t
                if self._replay_path is not None:
                    with open(self._replay_path, "a") as fh:
                        fh.write(json.dumps({"frame": self.engine.t, "command": cmd}) + "\n")
            except InvalidCommandError as exc:
                box["error"] = exc
            finally:
                done.set()

    def _run(self) -> None:
        self._started.wait()
        next_tick = time.monotonic()
        while not self._stop.is_set():
            if self.max_frames is not None and self.engine.t >= self.max_frames:
                break
            self._apply_pending()
            packet = self.engine.step()
            line = json.dumps(packet)
            with self._subs_lock:
                subs = list(self._subs)
            for sub in subs:
                sub.push(line)
            if self.fps > 0:
                next_tick += 1.0 / self.fps
                delay = next_tick - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
                else:
                    next_tick = time.monotonic()
        self._apply_pending()
        self.ended.set()
        with self._subs_lock:
            subs = list(self._subs)
        for sub in subs:
            sub.push(json.dumps({"event": "session-ended"}))
            sub.close()


class SteerServer:
    """HTTP front end: health, session management, command POSTs, NDJSON streams."""

    def __init__(self, bundle_path: str | Path, port: int = 8600,
                 fps: float = 30.0, state: float | None = None,
                 max_frames: int | None = None, host: str = "127.0.0.1",
                 autocreate: bool = True, replay_dir: str | None = "steerd_replays"):
        self.bundle = load_model_bundle(bundle_path)
        self.sessions: dict[str, SteerSession] = {}
        self._lock = threading.Lock()
        self.default_config = SessionConfig(state_lambda=state, fps=fps,
                                            max_frames=max_frames,
                                            replay_dir=replay_dir)
        handler = _make_handler(self)
        try:
            self.httpd = ThreadingHTTPServer((host, port), handler)
        except OSError as exc:
            raise PortInUseError(f"cannot bind port {port}: {exc}") from exc
        self.port = self.httpd.server_address[1]
        if autocreate:
            self.create_session(self.default_config)

    def create_session(self, config: SessionConfig) -> str:
        engine = SessionEngine(self.bundle, config)
        session_id = uuid.uuid4().hex[:12]
        session = SteerSession(engine, session_id, fps=config.fps,
                               autostart=config.autostart,
                               max_frames=config.max_frames,
                               replay_dir=config.replay_dir)
        with self._lock:
            self.sessions[session_id] = session
        return session_id

    def get_session(self, session_id: str) -> SteerSession:
        with self._lock:
            session = self.sessions.get(session_id)
        if session is None:
            raise SessionError(f"unknown session {session_id!r}")
        return session

    def serve_forever(self):
        try:
            self.httpd.serve_forever()
        finally:
            self.shutdown()

    def shutdown(self):
        with self._lock:
            sessions = list(self.sessions.values())
        for session in sessions:
            session.stop()
        self.httpd.shutdown()
        self.httpd.server_close()


def _make_handler(server: SteerServer):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.0"

        def log_message(self, *args):
            pass

        def _cors(self):
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")

        def _json(self, code: int, payload: dict):
            body = json.dumps(payload).encode()
            self.send_response(code)
            self._cors()
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_OPTIONS(self):
            self.send_response(204)
            self._cors()
            self.end_headers()

        def do_GET(self):
            parts = [p for p in self.path.split("?")[0].split("/") if p]
            if parts == ["health"]:
                with server._lock:
                    info = [{"session_id": sid, "frame": s.frame,
                             "ended": s.ended.is_set()}
                            for sid, s in server.sessions.items()]
                self._json(200, {"status": "ok", "sessions": info})
                return
            if len(parts) == 2 and parts[0] == "sessions":
                try:
                    session = server.get_session(parts[1])
                except SessionError as exc:
                    self._json(404, {"status": "error", "error": str(exc)})
                    return
                self._json(200, {"session_id": parts[1], "frame": session.frame,
                                 "ended": session.ended.is_set()})
                return
            if len(parts) == 3 and parts[0] == "sessions" and parts[2] == "stream":
                try:
                    session = server.get_session(parts[1])
                except SessionError as exc:
                    self._json(404, {"status": "error", "error": str(exc)})
                    return
                self._stream(session)
                return
            self._json(404, {"status": "error", "error": "not found"})

        def _stream(self, session: SteerSession):
            self.send_response(200)
            self._cors()
            self.send_header("Content-Type", "application/x-ndjson")
            self.send_header("Cache-Control", "no-store")
            self.end_headers()
            sub = session.subscribe()
            try:
                while True:
                    with sub.cond:
                        while not sub.queue and not sub.closed:
                            if not sub.cond.wait(timeout=30):
                                break
                        if not sub.queue and sub.closed:
                            break
                        lines = list(sub.queue)
                        sub.queue.clear()
                    if not lines:
                        if session.ended.is_set():
                            break
                        continue
                    payload = ("\n".join(lines) + "\n").encode()
                    self.wfile.write(payload)
                    self.wfile.flush()
            except (BrokenPipeError, ConnectionResetError):
                pass  # subscriber went away; nothing to clean beyond the queue
            finally:
                session.unsubscribe(sub)

        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            raw = self.rfile.read(length) if length else b"{}"
            try:
                payload = json.loads(raw or b"{}")
            except json.JSONDecodeError:
                self._json(400, {"status": "error", "error": "invalid JSON"})
                return
            parts = [p for p in self.path.split("?")[0].split("/") if p]
            if parts == ["sessions"]:
                config = SessionConfig.from_dict(
                    {**server.default_config.__dict__, **payload})
                try:
                    session_id = server.create_session(config)
                except (BundleError, SessionError) as exc:
                    self._json(400, {"status": "error", "error": str(exc)})
                    return
                self._json(200, {"status": "ok", "session_id": session_id})
                return
            if len(parts) == 3 and parts[0] == "sessions" and parts[2] == "command":
                try:
                    session = server.get_session(parts[1])
                    frame = session.apply_command(payload)
                except InvalidCommandError as exc:
                    self._json(400, {"status": "error", "error": "invalid-command",
                                     "detail": str(exc)})
                    return
                except SessionError as exc:
                    self._json(404, {"status": "error", "error": str(exc)})
                    return
                self._json(200, {"status": "ok", "applied_frame": frame})
                return
            self._json(404, {"status": "error", "error": "not found"})

    return Handler


def serve_forever(bundle_path: str | Path, port: int = 8600, fps: float = 30.0,
                  state: float | None = None, max_frames: int | None = None):
    server = SteerServer(bundle_path, port=port, fps=fps, state=state,
                         max_frames=max_frames)
    session_id = next(iter(server.sessions))
    print(f"steerd listening on 127.0.0.1:{server.port} session {session_id}",
          flush=True)
    server.serve_forever()
