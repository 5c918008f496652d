"""Benchmark input systems: Thomas, Lorenz, and Mackey-Glass.

Each simulation runs under a per-step parameter schedule so the generating
parameter can switch abruptly or drift during the run. The recorded
trajectory keeps the schedule value next to every frame, which is the
ground truth the regime-sensing experiments are scored against.

Thomas and Lorenz are integrated with fixed-step RK4; Mackey-Glass is a
delay equation and is stepped with forward Euler plus linear interpolation
into a uniformly sampled history ring buffer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DegenerateTrajectoryError,
    HistoryUnderflowError,
    IntegrationError,
)

DIVERGENCE_LIMIT = 1.0e6

# Internal integration steps per system; frames are recorded every
# `record_every` steps (see simulate).
DEFAULT_DT = {"thomas": 0.05, "lorenz": 0.02, "mackey_glass": 0.1}
DEFAULT_RECORD_EVERY = 2
DEFAULT_WARMUP_DISCARD = 2000


class SystemKind(str, Enum):
    THOMAS = "thomas"
    LORENZ = "lorenz"
    MACKEY_GLASS = "mackey_glass"


@dataclass(frozen=True)
class SystemSpec:
    """Which system to simulate plus its non-scheduled parameters.

    The scheduled bifurcation parameter (Thomas b, Lorenz rho,
    Mackey-Glass tau) is supplied separately via a ParamSchedule.
    """

    kind: SystemKind
    sigma: float = 10.0          # Lorenz
    beta_lorenz: float = 8.0 / 3.0
    beta_mg: float = 0.2         # Mackey-Glass
    gamma_mg: float = 0.1
    n_exp: float = 10.0

    def __post_init__(self):
        for v in (self.sigma, self.beta_lorenz, self.beta_mg, self.gamma_mg, self.n_exp):
            if not math.isfinite(v):
                raise ConfigError("system parameters must be finite")

    @property
    def dim(self) -> int:
        return 1 if self.kind == SystemKind.MACKEY_GLASS else 3

    @classmethod
    def thomas(cls) -> "SystemSpec":
        return cls(kind=SystemKind.THOMAS)

    @classmethod
    def lorenz(cls, sigma: float = 10.0, beta: float = 8.0 / 3.0) -> "SystemSpec":
        return cls(kind=SystemKind.LORENZ, sigma=sigma, beta_lorenz=beta)

    @classmethod
    def mackey_glass(cls, beta: float = 0.2, gamma: float = 0.1, n: float = 10.0) -> "SystemSpec":
        return cls(kind=SystemKind.MACKEY_GLASS, beta_mg=beta, gamma_mg=gamma, n_exp=n)


@dataclass(frozen=True)
class ParamSchedule:
    """Time course of the scheduled parameter.

    kinds:
      constant  - base_value forever
      step      - base_value, then each (t_switch, value) takes over at t >= t_switch
      sinusoid  - center + amplitude * sin(angular_frequency * t)

    Times are in trajectory time units with t = 0 at the first recorded frame
    (warm-up happens at negative t).
    """

    kind: str = "constant"
    base_value: float = 0.0
    switches: tuple[tuple[float, float], ...] = ()
    center: float = 0.0
    amplitude: float = 0.0
    angular_frequency: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "step", "sinusoid"):
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "step":
            times = [t for t, _ in self.switches]
            if any(b <= a for a, b in zip(times, times[1:])):
                raise ConfigError("step switch times must be strictly increasing")
        if self.kind == "sinusoid" and self.amplitude < 0:
            raise ConfigError("sinusoid amplitude must be >= 0")

    @classmethod
    def constant(cls, value: float) -> "ParamSchedule":
        return cls(kind="constant", base_value=value)

    @classmethod
    def step_switch(cls, base: float, switches: Sequence[tuple[float, float]]) -> "ParamSchedule":
        return cls(kind="step", base_value=base, switches=tuple((float(t), float(v)) for t, v in switches))

    @classmethod
    def sinusoid(cls, center: float, amplitude: float, angular_frequency: float) -> "ParamSchedule":
        return cls(kind="sinusoid", center=center, amplitude=amplitude,
                   angular_frequency=angular_frequency)

    def value_at(self, t: float) -> float:
        if self.kind == "constant":
            return self.base_value
        if self.kind == "step":
            value = self.base_value
            for t_switch, v in self.switches:
                if t >= t_switch:
                    value = v
                else:
                    break
            return value
        return self.center + self.amplitude * math.sin(self.angular_frequency * t)

    def upper_bound(self) -> float:
        """Largest value the schedule can ever take (used to size DDE history)."""
        if self.kind == "constant":
            return self.base_value
        if self.kind == "step":
            return max([self.base_value] + [v for _, v in self.switches])
        return self.center + self.amplitude

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "base_value": self.base_value}
        if self.kind == "step":
            d["switches"] = [list(s) for s in self.switches]
        if self.kind == "sinusoid":
            d.update(center=self.center, amplitude=self.amplitude,
                     angular_frequency=self.angular_frequency)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ParamSchedule":
        kind = d.get("kind", "constant")
        if kind == "step":
            return cls.step_switch(d.get("base_value", 0.0), [tuple(s) for s in d.get("switches", [])])
        if kind == "sinusoid":
            return cls.sinusoid(d["center"], d["amplitude"], d["angular_frequency"])
        return cls.constant(d.get("base_value", 0.0))


@dataclass
class Trajectory:
    """Recorded multivariate series with its parameter schedule values.

    frames: (n_frames, dim); lam: schedule value at each frame (NaN allowed
    for predicted trajectories where no ground truth exists); dt: time
    between recorded frames.
    """

    dt: float
    frames: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=float)
        self.lam = np.asarray(self.lam, dtype=float)
        if self.frames.ndim == 1:
            self.frames = self.frames[:, None]
        if len(self.lam) != len(self.frames):
            raise ConfigError("lambda column length must equal frame count")
        if not np.all(np.isfinite(self.frames)):
            raise IntegrationError("trajectory contains non-finite frames")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    def times(self) -> np.ndarray:
        return np.arange(self.n_frames) * self.dt

    def slice(self, start: int, stop: int | None = None) -> "Trajectory":
        return Trajectory(self.dt, self.frames[start:stop].copy(), self.lam[start:stop].copy())


def thomas_deriv(state: np.ndarray, b: float) -> np.ndarray:
    x, y, z = state
    return np.array([math.sin(y) - b * x,
                     math.sin(z) - b * y,
                     math.sin(x) - b * z])


def lorenz_deriv(state: np.ndarray, sigma: float, rho: float, beta: float) -> np.ndarray:
    x, y, z = state
    return np.array([sigma * (y - x),
                     x * (rho - z) - y,
                     x * y - beta * z])


def rk4_step(deriv_fn: Callable[[np.ndarray], np.ndarray],
             state: np.ndarray, dt: float) -> np.ndarray:
    """One classic fourth-order Runge-Kutta step of size dt."""
    k1 = deriv_fn(state)
    k2 = deriv_fn(state + 0.5 * dt * k1)
    k3 = deriv_fn(state + 0.5 * dt * k2)
    k4 = deriv_fn(state + dt * k3)
    out = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationError("RK4 step produced a non-finite state")
    return out


class DelayHistory:
    """Uniformly sampled ring buffer with linear interpolation lookback.

    Samples are spaced exactly ``dt`` apart; ``append`` advances the latest
    time by dt. Looking back before the oldest retained sample raises
    HistoryUnderflowError.
    """

    def __init__(self, t0: float, dt: float, values: Sequence[float], capacity: int):
        values = np.asarray(values, dtype=float)
        if capacity < len(values):
            raise ConfigError("history capacity smaller than initial history")
        self.dt = dt
        self._buf = np.empty(capacity, dtype=float)
        self._buf[: len(values)] = values
        self._count = len(values)      # valid samples
        self._head = len(values) % capacity  # next write slot
        self._t_latest = t0

    @property
    def t_latest(self) -> float:
        return self._t_latest

    @property
    def latest(self) -> float:
        cap = len(self._buf)
        return self._buf[(self._head - 1) % cap]

    def append(self, x: float) -> None:
        cap = len(self._buf)
        self._buf[self._head] = x
        self._head = (self._head + 1) % cap
        self._count = min(self._count + 1, cap)
        self._t_latest += self.dt

    def value_at(self, t: float) -> float:
        """Linear interpolation between the two samples bracketing t."""
        steps_back = (self._t_latest - t) / self.dt
        if steps_back < -1e-9:
            raise HistoryUnderflowError(f"lookup at t={t} is ahead of stored history")
        nearest = round(steps_back)
        if abs(steps_back - nearest) < 1e-9:  # snap accumulated float drift
            lo, frac = int(nearest), 0.0
        else:
            lo = int(math.floor(steps_back))
            frac = steps_back - lo
        if lo > self._count - 1 or (frac > 0.0 and lo + 1 > self._count - 1):
            raise HistoryUnderflowError(
                f"lookup at t={t} precedes stored history ({self._count} samples)")
        cap = len(self._buf)
        idx_hi = (self._head - 1 - lo) % cap        # sample lo steps back
        if frac == 0.0:
            return float(self._buf[idx_hi])
        idx_lo = (self._head - 2 - lo) % cap        # one step further back
        return float(self._buf[idx_hi] * (1.0 - frac) + self._buf[idx_lo] * frac)


def mackey_glass_step(history: DelayHistory, spec: SystemSpec, tau: float,
                      t: float, dt: float) -> float:
    """Advance x by one Euler step using the interpolated delayed value.

    The new sample is appended to the history; returns the new x.
    """
    if tau <= 0:
        raise ConfigError("tau must be positive")
    x_tau = history.value_at(t - tau)
    x_t = history.latest
    dx = spec.beta_mg * x_tau / (1.0 + x_tau ** spec.n_exp) - spec.gamma_mg * x_t
    x_next = x_t + dt * dx
    history.append(x_next)
    return x_next


def _initial_state(spec: SystemSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.kind == SystemKind.THOMAS:
        return rng.uniform(-1.0, 1.0, size=3)
    if spec.kind == SystemKind.LORENZ:
        return np.array([1.0, 1.0, 1.0]) + 0.1 * rng.standard_normal(3)
    raise ConfigError("no ODE initial state for Mackey-Glass")


def simulate(spec: SystemSpec, schedule: ParamSchedule, n_frames: int,
             dt: float | None = None, warmup_discard: int | None = None,
             seed: int = 0, record_every: int = DEFAULT_RECORD_EVERY) -> Trajectory:
    """Simulate a system under a schedule and return the recorded trajectory.

    ``dt`` is the internal integration step; one frame is recorded every
    ``record_every`` internal steps, so the trajectory's frame spacing is
    dt * record_every. The schedule is evaluated at the start of every
    internal step; t = 0 is the first recorded frame and the
    ``warmup_discard`` internal steps before it are dropped.
    """
    if n_frames <= 0:
        raise ConfigError("n_frames must be positive")
    if dt is None:
        dt = DEFAULT_DT[spec.kind.value]
    if warmup_discard is None:
        warmup_discard = DEFAULT_WARMUP_DISCARD
    rng = np.random.default_rng(seed)

    frame_dt = dt * record_every
    frames = np.empty((n_frames, spec.dim))
    lam = np.empty(n_frames)

    if spec.kind == SystemKind.MACKEY_GLASS:
        tau_max = schedule.upper_bound()
        if tau_max <= 0:
            raise ConfigError("Mackey-Glass tau schedule must stay positive")
        hist_len = int(math.ceil(tau_max / dt)) + 4
        t0 = -warmup_discard * dt
        init = 1.1 + 0.01 * rng.standard_normal(hist_len)
        history = DelayHistory(t0, dt, init, capacity=hist_len + 8)
        t = t0
        for _ in range(warmup_discard):
            mackey_glass_step(history, spec, schedule.value_at(t), t, dt)
            t += dt
        for k in range(n_frames):
            t_frame = k * frame_dt
            frames[k, 0] = history.latest
            lam[k] = schedule.value_at(t_frame)
            if abs(frames[k, 0]) > DIVERGENCE_LIMIT:
                raise IntegrationError(f"state diverged at frame {k}")
            if k < n_frames - 1:
                for j in range(record_every):
                    t_sub = t_frame + j * dt
                    mackey_glass_step(history, spec, schedule.value_at(t_sub), t_sub, dt)
        return Trajectory(frame_dt, frames, lam)

    state = _initial_state(spec, rng)
    if spec.kind == SystemKind.THOMAS:
        def deriv_at(s, lam_v):
            return thomas_deriv(s, lam_v)
    else:
        def deriv_at(s, lam_v):
            return lorenz_deriv(s, spec.sigma, lam_v, spec.beta_lorenz)

    t = -warmup_discard * dt
    for _ in range(warmup_discard):
        lam_v = schedule.value_at(t)
        state = rk4_step(lambda s: deriv_at(s, lam_v), state, dt)
        t += dt
    for k in range(n_frames):
        t_frame = k * frame_dt
        frames[k] = state
        lam[k] = schedule.value_at(t_frame)
        if np.max(np.abs(state)) > DIVERGENCE_LIMIT:
            raise IntegrationError(f"state diverged at frame {k}")
        if k < n_frames - 1:
            for j in range(record_every):
                lam_v = schedule.value_at(t_frame + j * dt)
                state = rk4_step(lambda s: deriv_at(s, lam_v), state, dt)
    return Trajectory(frame_dt, frames, lam)


def estimate_thomas_b(traj: Trajectory, dt: float | None = None) -> float:
    """Least-squares estimate of the Thomas damping from a trajectory.

    Uses central-difference derivatives on the interior frames; the
    closed-form minimizer of sum ||(sin(y) - xdot, ...) - b (x, y, z)||^2 is
    a ratio of inner products.
    """
    if traj.dim != 3:
        raise DegenerateTrajectoryError("Thomas estimate needs a 3-component trajectory")
    if traj.n_frames < 200:
        raise DegenerateTrajectoryError("need at least 200 frames")
    if dt is None:
        dt = traj.dt
    f = traj.frames
    mid = f[1:-1]
    deriv = (f[2:] - f[:-2]) / (2.0 * dt)
    x, y, z = mid[:, 0], mid[:, 1], mid[:, 2]
    resid = np.column_stack([np.sin(y) - deriv[:, 0],
                             np.sin(z) - deriv[:, 1],
                             np.sin(x) - deriv[:, 2]])
    denom = float(np.sum(mid * mid))
    if denom < 1e-9:
        raise DegenerateTrajectoryError("trajectory variance too small for estimate")
    return float(np.sum(resid * mid) / denom)
