"""Offline analysis of order-parameter series and trajectories.

detect_equilibrium_shift operationalizes reading plateau shifts off an R(t)
trace: alarm when the rolling mean leaves the mean +/- k*std band of the
plateau it was tracking, then re-baseline. classify_attractor sorts a
trajectory into dead / periodic / chaotic using trailing variance, the
autocorrelation peak, and a nearest-neighbor divergence-rate proxy for the
largest Lyapunov exponent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .dynsys import Trajectory
from .errors import TooShortError, WindowTooLargeError

# Plateaus can be numerically flat (a dead input gives machine-constant R);
# the band never shrinks below this floor so rounding dust cannot alarm.
MIN_BAND_STD = 1e-6


class AttractorClass(str, Enum):
    DEAD = "dead"
    PERIODIC = "periodic"
    CHAOTIC = "chaotic"


@dataclass
class ChangeReport:
    change_points: list[tuple[int, float, float]] = field(default_factory=list)
    latency_frames: list[int | None] = field(default_factory=list)

    def frames(self) -> list[int]:
        return [cp[0] for cp in self.change_points]

    def to_dict(self) -> dict:
        return {
            "change_points": [
                {"frame": int(f), "r_before": rb, "r_after": ra}
                for f, rb, ra in self.change_points
            ],
            "latency_frames": [
                None if l is None else int(l) for l in self.latency_frames
            ],
        }


def moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Centered-ish moving average, same length as the input."""
    x = np.asarray(x, dtype=float)
    if window <= 1:
        return x.copy()
    kernel = np.ones(window) / window
    pad = np.concatenate([np.full(window // 2, x[0]), x,
                          np.full(window - 1 - window // 2, x[-1])])
    return np.convolve(pad, kernel, mode="valid")


def detect_equilibrium_shift(r_series: np.ndarray, window: int, k_sigma: float,
                             true_switches: list[int] | None = None) -> ChangeReport:
    """Flag step-like shifts of a plateau-hugging series.

    A plateau baseline (mean, std) is taken from the first `window` frames;
    the trailing `window`-frame rolling mean is compared against the
    mean +/- k_sigma*std band. On an alarm the detector skips one window so
    the rolling mean refills with post-change samples, re-baselines, and
    continues. Latencies are measured to the nearest preceding true switch
    when ground truth is supplied.
    """
    r = np.asarray(r_series, dtype=float)
    if len(r) <= 2 * window:
        raise WindowTooLargeError(
            f"series length {len(r)} must exceed 2 * window = {2 * window}")

    csum = np.concatenate([[0.0], np.cumsum(r)])

    def rolling_mean(end: int) -> float:
        # mean of r[end-window+1 .. end]
        return (csum[end + 1] - csum[end + 1 - window]) / window

    report = ChangeReport()
    base_lo = 0
    while base_lo + window <= len(r):
        seg = r[base_lo: base_lo + window]
        mean = float(np.mean(seg))
        band = max(float(np.std(seg)), MIN_BAND_STD) * k_sigma
        alarm = None
        for end in range(base_lo + window, len(r)):
            if abs(rolling_mean(end) - mean) > band:
                alarm = end
                break
        if alarm is None:
            break
        # new plateau stats from the window after the rolling mean refills
        refill = min(alarm + window, len(r) - 1)
        after_seg = r[refill: min(refill + window, len(r))]
        r_after = float(np.mean(after_seg)) if len(after_seg) else float(r[-1])
        report.change_points.append((alarm, mean, r_after))
        base_lo = refill
        if base_lo + window > len(r):
            break

    for frame, _, _ in report.change_points:
        if not true_switches:
            report.latency_frames.append(None)
            continue
        preceding = [s for s in true_switches if s <= frame]
        report.latency_frames.append(frame - max(preceding) if preceding else None)
    return report


def autocorrelation(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased normalized autocorrelation for lags 0..max_lag via FFT."""
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    n = len(x)
    var = float(np.dot(x, x))
    if var < 1e-24:
        return np.ones(max_lag + 1)
    size = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, size)
    acf = np.fft.irfft(f * np.conj(f), size)[: max_lag + 1]
    return acf / var


def measure_cycle_frames(x: np.ndarray) -> float:
    """Mean peak-to-peak spacing of a scalar oscillation, in frames.

    Peaks are strict local maxima above the series mean, which skips the
    small sub-mean wiggles chaotic signals produce.
    """
    x = np.asarray(x, dtype=float)
    if len(x) < 16:
        raise TooShortError("too few frames to measure a cycle")
    mean = x.mean()
    interior = x[1:-1]
    peaks = np.flatnonzero((interior > x[:-2]) & (interior >= x[2:]) & (interior > mean)) + 1
    if len(peaks) < 2:
        raise TooShortError("fewer than two peaks; cannot measure a cycle")
    return float(np.mean(np.diff(peaks)))


def largest_lyapunov_proxy(frames: np.ndarray, horizon: int = 40,
                           n_refs: int = 200, theiler: int = 50,
                           embed_dim: int = 3, embed_delay: int | None = None) -> float:
    """Divergence rate of nearest-neighbor pairs in (delay) embedding.

    Returns the slope of mean log separation per frame over `horizon`
    frames; positive indicates exponential divergence. Scalar series are
    delay-embedded; multivariate ones are used as-is. Reference points are
    evenly spaced so the result carries no RNG state.
    """
    frames = np.asarray(frames, dtype=float)
    if frames.ndim == 1:
        frames = frames[:, None]
    if frames.shape[1] == 1:
        if embed_delay is None:
            acf = autocorrelation(frames[:, 0], min(len(frames) // 2, 500))
            below = np.flatnonzero(acf < 0.5)
            embed_delay = int(below[0]) if len(below) else 10
            embed_delay = max(embed_delay, 1)
        m = embed_dim
        n_pts = len(frames) - (m - 1) * embed_delay
        emb = np.column_stack([frames[i * embed_delay: i * embed_delay + n_pts, 0]
                               for i in range(m)])
    else:
        emb = frames
    n = len(emb) - horizon
    if n < 2 * theiler + 10:
        raise TooShortError("trajectory too short for the divergence proxy")

    refs = np.linspace(0, n - 1, min(n_refs, n)).astype(int)
    log_div = np.zeros(horizon + 1)
    counts = np.zeros(horizon + 1)
    pts = emb[:n]
    scale = float(np.mean(np.std(pts, axis=0)))
    floor = max(1e-9 * scale, 1e-300)  # exact revisits carry only rounding noise
    for i in refs:
        d = np.linalg.norm(pts - pts[i], axis=1)
        lo = max(0, i - theiler)
        d[lo: i + theiler + 1] = np.inf
        d[d < floor] = np.inf
        j = int(np.argmin(d))
        if not np.isfinite(d[j]):
            continue
        sep = np.linalg.norm(emb[i: i + horizon + 1] - emb[j: j + horizon + 1], axis=1)
        ok = sep > 0
        log_div[ok] += np.log(sep[ok])
        counts[ok] += 1
    valid = counts > 0
    if valid.sum() < 2:
        raise TooShortError("no usable neighbor pairs for the divergence proxy")
    curve = log_div[valid] / counts[valid]
    lags = np.flatnonzero(valid)
    slope = float(np.polyfit(lags, curve, 1)[0])
    return slope


def classify_attractor(traj: Trajectory, trailing_window: int = 1000,
                       dead_var_tol: float = 1e-8,
                       periodic_corr: float = 0.98) -> AttractorClass:
    """Sort a post-transient trajectory into dead / periodic / chaotic.

    Dead: every component's variance over the trailing window is below
    tolerance. Periodic: the autocorrelation (worst component) exceeds the
    threshold at some lag. Otherwise the Lyapunov proxy decides: positive
    divergence is chaotic, non-positive falls back to periodic.
    """
    if traj.n_frames < 4000:
        raise TooShortError(f"need >= 4000 frames, got {traj.n_frames}")
    f = traj.frames
    tail = f[-trailing_window:]
    if float(np.max(np.var(tail, axis=0))) < dead_var_tol:
        return AttractorClass.DEAD

    max_lag = min(traj.n_frames // 2, 2000)
    worst = np.ones(max_lag + 1)
    for d in range(traj.dim):
        if float(np.var(f[:, d])) < 1e-12:
            continue  # constant component is periodic at any lag
        worst = np.minimum(worst, autocorrelation(f[:, d], max_lag))
    if np.max(worst[4:]) > periodic_corr:
        return AttractorClass.PERIODIC

    slope = largest_lyapunov_proxy(f)
    return AttractorClass.CHAOTIC if slope > 0 else AttractorClass.PERIODIC


def find_collapse_frame(x: np.ndarray, reference_std: float, window: int = 200,
                        frac: float = 0.05) -> int | None:
    """First frame where the rolling std stays below frac * reference_std.

    Used as ground truth for the moment a transient-chaotic signal dies.
    Returns None if the signal never collapses.
    """
    x = np.asarray(x, dtype=float)
    if len(x) < window + 1:
        return None
    csum = np.concatenate([[0.0], np.cumsum(x)])
    csum2 = np.concatenate([[0.0], np.cumsum(x * x)])
    mean = (csum[window:] - csum[:-window]) / window
    mean2 = (csum2[window:] - csum2[:-window]) / window
    std = np.sqrt(np.maximum(mean2 - mean * mean, 0.0))
    below = std < frac * reference_std
    # require it to stay below through the end of the series
    stay = np.flatnonzero(~below)
    if len(stay) == 0:
        return 0
    last_bad = int(stay[-1])
    if last_bad + 1 >= len(below):
        return None
    return last_bad + 1


def pearson_correlation(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a = a - a.mean()
    b = b - b.mean()
    denom = math.sqrt(float(np.dot(a, a)) * float(np.dot(b, b)))
    if denom == 0.0:
        return 0.0
    return float(np.dot(a, b) / denom)
