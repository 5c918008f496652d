"""Warm-up, ridge training, closed-loop prediction, and state targeting.

A TwinSession bundles the reservoir and its link phases and advances them
one frame at a time: the node update at frame t uses the phases at t, then
the phase update sees the fresh node states. Time is counted in frames and
the phase dynamics integrate with dt = 1 frame (natural frequencies and
forcing rates are in radians per frame).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .dynsys import Trajectory
from .errors import (
    ConfigError,
    DivergenceError,
    InsufficientDataError,
    NoEquilibriumError,
    SingularSystemError,
)
from .phasenet import (
    OrderSample,
    PhaseParams,
    PhaseState,
    PhaseTopology,
    forced_phase_step,
    global_order,
    phase_step,
    wrap_phase,
)
from .reservoir import (
    ReservoirParams,
    ReservoirState,
    ReservoirTopology,
    readout,
    reservoir_step,
)

OUTPUT_DIVERGENCE_LIMIT = 1.0e6

COUPLED = "coupled"
FORCED = "forced"
FROZEN = "frozen"
PHASE_MODES = (COUPLED, FORCED, FROZEN)


@dataclass
class TrainConfig:
    warmup_steps: int = 500
    train_steps: int = 20000
    ridge_beta: float = 1e-6
    predict_warmup_steps: int = 2000
    dt: float = 1.0

    def __post_init__(self):
        if min(self.warmup_steps, self.train_steps, self.predict_warmup_steps) <= 0:
            raise ConfigError("step counts must be positive")
        if self.ridge_beta < 0:
            raise ConfigError("ridge_beta must be >= 0")


@dataclass
class ReadoutMatrix:
    w_out: np.ndarray

    def __post_init__(self):
        self.w_out = np.asarray(self.w_out, dtype=float)
        if not np.all(np.isfinite(self.w_out)):
            raise ConfigError("readout matrix must be finite")


@dataclass
class TargetingConfig:
    """How the mean phase is swept and scored.

    Two built-in losses: "rmse" compares the one-step readout against the
    test frame, averaged over trailing loss_window steps; "free_run_stats"
    periodically snapshots the session, runs a short frozen-phase free run,
    and scores how well its per-component mean magnitude and spread match
    the test state (a chaotic state's one-step error barely depends on the
    mean phase, so the free-run statistics discriminate much better there).
    """

    sweep_omega: float = 0.01        # rad per frame while forced
    sweep_steps: int = 700           # must cover > one full rotation
    r_equilibrium_tol: float = 0.01
    r_window: int = 200
    min_equilibrium_steps: int = 600  # constellation settles slower than R
    loss_window: int = 50
    loss: str | Callable[[np.ndarray, np.ndarray], float] = "rmse"
    probe_stride: int = 40           # free_run_stats: sweep steps between probes
    free_run_horizon: int = 500
    free_run_discard: int = 100
    ref_window: int = 600            # test frames used for reference statistics

    def __post_init__(self):
        if self.sweep_omega == 0.0:
            raise ConfigError("sweep_omega must be nonzero")
        if self.sweep_steps * abs(self.sweep_omega) <= 2.0 * math.pi:
            raise ConfigError("sweep must cover more than one full mean-phase rotation")
        if isinstance(self.loss, str) and self.loss not in ("rmse", "free_run_stats"):
            raise ConfigError(f"unknown loss {self.loss!r}")

    def loss_fn(self) -> Callable[[np.ndarray, np.ndarray], float]:
        if callable(self.loss):
            return self.loss
        return lambda pred, truth: float(np.sqrt(np.mean((pred - truth) ** 2)))


@dataclass
class TwinSession:
    """One reservoir + phase system advanced frame by frame."""

    rtopo: ReservoirTopology
    rparams: ReservoirParams
    ptopo: PhaseTopology
    pparams: PhaseParams
    rstate: ReservoirState
    pstate: PhaseState
    phase_mode: str = COUPLED
    g: float = 0.0                    # forcing rate while in forced mode
    update_order: str = "node_then_phase"

    def __post_init__(self):
        if self.phase_mode not in PHASE_MODES:
            raise ConfigError(f"unknown phase mode {self.phase_mode!r}")
        if self.update_order not in ("node_then_phase", "phase_then_node"):
            raise ConfigError(f"unknown update order {self.update_order!r}")

    def copy(self) -> "TwinSession":
        return TwinSession(self.rtopo, self.rparams, self.ptopo, self.pparams,
                           self.rstate.copy(), self.pstate.copy(),
                           self.phase_mode, self.g, self.update_order)

    def _advance_phases(self) -> None:
        if self.phase_mode == COUPLED:
            self.pstate = phase_step(self.pstate, self.rstate.n, self.ptopo, self.pparams)
        elif self.phase_mode == FORCED:
            self.pstate = forced_phase_step(self.pstate, self.g)
        else:  # frozen: phases constant, clock still ticks
            self.pstate = PhaseState(self.pstate.phi, self.pstate.t + 1.0,
                                     self.pstate.unwrapped)

    def drive(self, u: np.ndarray) -> None:
        """Feed one input frame through the node and phase updates."""
        if self.update_order == "node_then_phase":
            self.rstate = reservoir_step(self.rstate, u, self.pstate, self.rtopo, self.rparams)
            self._advance_phases()
        else:
            self._advance_phases()
            self.rstate = reservoir_step(self.rstate, u, self.pstate, self.rtopo, self.rparams)

    def order(self) -> OrderSample:
        return global_order(self.pstate)

    def output(self, w_out: np.ndarray) -> np.ndarray:
        return readout(w_out, self.rstate)


def harvest_states(traj: Trajectory, session: TwinSession,
                   cfg: TrainConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run the open loop over training data and collect regression pairs.

    The first warmup_steps states are discarded; column k of S is the state
    after feeding frame warmup+k, and column k of U is the following input
    frame (what the readout should produce from that state). The order log
    has one row (t, R, mean_phase) per driven step.
    """
    total = cfg.warmup_steps + cfg.train_steps
    if traj.n_frames < total + 1:
        raise InsufficientDataError(
            f"need at least {total + 1} frames, trajectory has {traj.n_frames}")
    n_nodes = session.rtopo.n_nodes
    s = np.empty((n_nodes, cfg.train_steps))
    u = np.empty((traj.dim, cfg.train_steps))
    order_log = np.empty((total, 3))
    for k in range(total):
        session.drive(traj.frames[k])
        sample = session.order()
        order_log[k] = (sample.t, sample.R, sample.mean_phase)
        if k >= cfg.warmup_steps:
            j = k - cfg.warmup_steps
            s[:, j] = session.rstate.n
            u[:, j] = traj.frames[k + 1]
    return s, u, order_log


def ridge_fit(s: np.ndarray, u: np.ndarray, beta: float) -> ReadoutMatrix:
    """Solve W = U S^T (S S^T + beta I)^-1 via an SPD factorization."""
    s = np.asarray(s, dtype=float)
    u = np.asarray(u, dtype=float)
    if s.shape[1] != u.shape[1]:
        raise ConfigError(f"S has {s.shape[1]} columns but U has {u.shape[1]}")
    gram = s @ s.T
    gram[np.diag_indices_from(gram)] += beta
    rhs = s @ u.T
    try:
        factor = scipy.linalg.cho_factor(gram, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise SingularSystemError(
            "regularized Gram matrix is not positive definite "
            "(rank-deficient states with beta = 0?)") from exc
    w = scipy.linalg.cho_solve(factor, rhs, check_finite=False).T
    return ReadoutMatrix(w)


@dataclass
class PredictionResult:
    trajectory: Trajectory
    order_log: np.ndarray            # (horizon, 3) rows (t, R, mean_phase)


def closed_loop_predict(session: TwinSession, w_out: ReadoutMatrix | np.ndarray,
                        horizon: int, frame_dt: float = 1.0) -> PredictionResult:
    """Feed the readout back as input for `horizon` frames.

    Frame k's output is the readout of the state reached after feeding frame
    k-1's output (or, for k = 0, after the last warm-up input). Raises
    DivergenceError with the offending frame if the output blows up.
    """
    w = w_out.w_out if isinstance(w_out, ReadoutMatrix) else np.asarray(w_out)
    dim = w.shape[0]
    frames = np.empty((horizon, dim))
    order_log = np.empty((horizon, 3))
    for k in range(horizon):
        y = session.output(w)
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > OUTPUT_DIVERGENCE_LIMIT:
            raise DivergenceError(f"closed-loop output diverged at frame {k}", frame=k)
        frames[k] = y
        session.drive(y)
        sample = session.order()
        order_log[k] = (sample.t, sample.R, sample.mean_phase)
    traj = Trajectory(frame_dt, frames, np.full(horizon, np.nan))
    return PredictionResult(traj, order_log)


@dataclass
class TargetResult:
    r0: float
    mean_phase0: float
    phase_state: PhaseState
    t_r0: int                        # frame index where R was declared settled
    frames_consumed: int             # test frames eaten by targeting
    sweep_log: np.ndarray            # rows (frame, mean_phase, windowed_loss)


def free_run_statistic_loss(session: TwinSession, w: np.ndarray,
                            ref_mean_abs: np.ndarray, ref_std: np.ndarray,
                            horizon: int, discard: int) -> float:
    """Distance between a short frozen-phase free run and the test statistics.

    Runs the closed loop from a copy of the session with phases frozen at
    their current values; returns the euclidean mismatch of per-component
    |mean| and std (infinite when the free run blows up).
    """
    probe = session.copy()
    probe.phase_mode = FROZEN
    probe.g = 0.0
    frames = np.empty((horizon, w.shape[0]))
    for k in range(horizon):
        y = w @ probe.rstate.n
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > OUTPUT_DIVERGENCE_LIMIT:
            return float("inf")
        frames[k] = y
        probe.drive(y)
    seg = frames[discard:]
    mean_abs = np.abs(seg.mean(axis=0))
    std = seg.std(axis=0)
    return float(np.sqrt(np.sum((mean_abs - ref_mean_abs) ** 2 + (std - ref_std) ** 2)))


def target_mean_phase(u_test: Trajectory, session: TwinSession,
                      w_out: ReadoutMatrix | np.ndarray,
                      tcfg: TargetingConfig) -> TargetResult:
    """Freeze R at its test-state equilibrium and lock onto the best <Phi>.

    Three stages, all open loop on u_test: (1) coupled dynamics until the
    rolling std of R over r_window frames drops below tolerance; (2) uniform
    forcing at sweep_omega for sweep_steps, scoring candidate mean phases
    against the test data across at least one full rotation; (3) keep
    forcing until the mean phase first returns to the loss minimizer (a
    final partial step lands on it exactly), then freeze.
    """
    w = w_out.w_out if isinstance(w_out, ReadoutMatrix) else np.asarray(w_out)
    n_frames = u_test.n_frames

    # stage 1: coupled dynamics until R equilibrates
    session.phase_mode = COUPLED
    recent = []
    k = 0
    settled = False
    while k < n_frames - 1:
        session.drive(u_test.frames[k])
        k += 1
        recent.append(session.order().R)
        if len(recent) > tcfg.r_window:
            recent.pop(0)
        if (k >= tcfg.min_equilibrium_steps and len(recent) == tcfg.r_window
                and float(np.std(recent)) < tcfg.r_equilibrium_tol):
            settled = True
            break
    if not settled:
        raise NoEquilibriumError(
            f"R never stabilized (rolling std over {tcfg.r_window} frames "
            f">= {tcfg.r_equilibrium_tol}) within {n_frames} test frames")
    t_r0 = k
    r0 = session.order().R

    # stage 2: uniform forcing across one-plus rotation
    if k + tcfg.sweep_steps >= n_frames:
        raise InsufficientDataError(
            f"test data too short for the sweep: need {k + tcfg.sweep_steps + 1} frames, "
            f"have {n_frames}")
    session.phase_mode = FORCED
    session.g = tcfg.sweep_omega
    sweep_start = k

    if tcfg.loss == "free_run_stats":
        ref = u_test.frames[max(0, t_r0 - tcfg.ref_window): t_r0]
        ref_mean_abs = np.abs(ref.mean(axis=0))
        ref_std = ref.std(axis=0)
        cand_loss, cand_phase, cand_step = [], [], []
        for j in range(tcfg.sweep_steps):
            session.drive(u_test.frames[k])
            k += 1
            if j % tcfg.probe_stride == 0:
                val = free_run_statistic_loss(session, w, ref_mean_abs, ref_std,
                                              tcfg.free_run_horizon, tcfg.free_run_discard)
                cand_loss.append(val)
                cand_phase.append(session.order().mean_phase)
                cand_step.append(sweep_start + j + 1)
        best = int(np.argmin(cand_loss))                   # earliest tie wins
        mean_phase0 = float(cand_phase[best])
        sweep_log = np.column_stack([cand_step, cand_phase, cand_loss])
    else:
        loss_fn = tcfg.loss_fn()
        losses = np.empty(tcfg.sweep_steps)
        phases = np.empty(tcfg.sweep_steps)
        for j in range(tcfg.sweep_steps):
            session.drive(u_test.frames[k])
            k += 1
            losses[j] = loss_fn(session.output(w), u_test.frames[k])
            phases[j] = session.order().mean_phase
        window = min(tcfg.loss_window, tcfg.sweep_steps)
        kernel = np.ones(window) / window
        windowed = np.convolve(losses, kernel, mode="valid")   # trailing windows
        best = int(np.argmin(windowed))                        # earliest tie wins
        best_step = best + window - 1
        mean_phase0 = float(phases[best_step])
        sweep_log = np.column_stack(
            [np.arange(sweep_start + window, sweep_start + tcfg.sweep_steps + 1),
             phases[window - 1:], windowed])

    # stage 3: force until <Phi> first re-reaches the target, then freeze
    omega = tcfg.sweep_omega
    max_extra = int(math.ceil(2.0 * math.pi / abs(omega))) + 2
    for _ in range(max_extra):
        current = session.order().mean_phase
        gap = float(wrap_phase(mean_phase0 - current))
        if omega > 0 and gap < 0:
            gap += 2.0 * math.pi
        elif omega < 0 and gap > 0:
            gap -= 2.0 * math.pi
        if abs(gap) <= abs(omega):
            if k >= n_frames:
                raise InsufficientDataError("test data exhausted before the freeze")
            session.g = gap            # land exactly on the target
            session.drive(u_test.frames[k])
            k += 1
            break
        if k >= n_frames:
            raise InsufficientDataError("test data exhausted before the freeze")
        session.drive(u_test.frames[k])
        k += 1
    session.phase_mode = FROZEN
    session.g = 0.0
    return TargetResult(r0=r0, mean_phase0=mean_phase0,
                        phase_state=session.pstate.copy(), t_r0=t_r0,
                        frames_consumed=k, sweep_log=sweep_log)


def one_step_nrmse(s: np.ndarray, u: np.ndarray, w_out: ReadoutMatrix | np.ndarray) -> float:
    """Teacher-forced one-step-ahead error, normalized by the target std."""
    w = w_out.w_out if isinstance(w_out, ReadoutMatrix) else np.asarray(w_out)
    pred = w @ s
    denom = float(np.std(u))
    if denom == 0.0:
        return float(np.sqrt(np.mean((pred - u) ** 2)))
    return float(np.sqrt(np.mean((pred - u) ** 2)) / denom)
