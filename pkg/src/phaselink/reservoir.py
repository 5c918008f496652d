"""Echo state network core with phase-modulated link strengths.

The recurrent adjacency is random, rescaled so the spectral radius of its
entrywise absolute value hits a configured target. Each nonzero entry is a
directed link carrying one oscillator phase; at every step the effective
weight is the static weight times 1 - (m/2)(1 + sin(phase)), which keeps
every strength between its original value and (1 - m) times it, so
modulation can only shrink the spectral radius.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import (
    ConfigError,
    ConvergenceError,
    DimensionMismatchError,
    IndexMismatchError,
)
from .phasenet import PhaseState, PhaseTopology, build_phase_topology

_POWER_ITER_SEED = 0x5eed


@dataclass
class ReservoirParams:
    n_nodes: int = 300
    node_density: float = 0.02
    spectral_target: float = 0.9
    alpha: float = 0.2               # leakage
    input_scale: float = 0.5         # delta, W_in ~ U[-delta, delta]
    mod_depth: float = 0.4           # m
    bias: float | np.ndarray = 0.0   # xi

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must be in [0, 1]")
        if not 0.0 <= self.mod_depth <= 1.0:
            raise ConfigError("mod_depth must be in [0, 1]")
        if self.n_nodes < 2:
            raise ConfigError("need at least 2 nodes")
        if not 0.0 < self.node_density <= 1.0:
            raise ConfigError("node_density must be in (0, 1]")

    def bias_vector(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.bias, dtype=float), (self.n_nodes,)).copy()


@dataclass
class ReservoirTopology:
    """Static random pieces of the network plus the link enumeration.

    Link l is the l-th nonzero of node_adj in CSR (row-major) order; entry
    (i, j) carries activity from node j to node i, so the link runs j -> i.
    """

    node_adj: sp.csr_matrix          # spectrally scaled
    w_in: np.ndarray                 # (N_n, N_u)
    links: np.ndarray                # (N_l, 2) (src, dst)
    link_rows: np.ndarray            # destination node per nonzero (CSR order)
    link_cols: np.ndarray            # source node per nonzero

    @property
    def n_nodes(self) -> int:
        return self.node_adj.shape[0]

    @property
    def n_links(self) -> int:
        return self.node_adj.nnz

    @property
    def base_weights(self) -> np.ndarray:
        return self.node_adj.data


@dataclass
class ReservoirState:
    n: np.ndarray
    t: int = 0

    def copy(self) -> "ReservoirState":
        return ReservoirState(self.n.copy(), self.t)

    @classmethod
    def zeros(cls, n_nodes: int) -> "ReservoirState":
        return cls(np.zeros(n_nodes), 0)


def spectral_radius(a: sp.spmatrix | np.ndarray, iters: int = 20000,
                    tol: float = 1e-10) -> float:
    """Dominant eigenvalue of |a| by power iteration with a seeded start.

    The entrywise absolute value is nonnegative, so a positive start vector
    converges to the Perron root whenever the matrix is primitive. Raises
    ConvergenceError with the last delta if the iteration budget runs out.
    """
    a = sp.csr_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ConfigError("spectral_radius needs a square matrix")
    b = abs(a)
    rng = np.random.default_rng(_POWER_ITER_SEED)
    v = rng.random(a.shape[0]) + 0.5
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = b @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        delta = abs(norm - est)
        est = norm
        v = w / norm
        if delta <= tol * max(1.0, est):
            return est
    raise ConvergenceError(
        f"power iteration did not converge in {iters} iterations (last delta {delta:.3e})")


def build_reservoir(params: ReservoirParams, input_dim: int, seed: int,
                    phase_density: float = 0.05) -> tuple[ReservoirTopology, PhaseTopology]:
    """Sample the node network, rescale it, and derive the link-phase graph.

    Nonzero weights are uniform in [-1, 1] on a Bernoulli(node_density)
    mask, then the whole matrix is scaled so spectral_radius(|A|) equals the
    target. W_in is uniform in [-input_scale, input_scale]. The phase graph
    seed is derived from the same seed stream.
    """
    ss = np.random.SeedSequence(seed)
    seed_nodes, seed_phase = ss.spawn(2)
    rng = np.random.default_rng(seed_nodes)
    n = params.n_nodes

    mask = rng.random((n, n)) < params.node_density
    weights = rng.uniform(-1.0, 1.0, size=(n, n))
    a = sp.csr_matrix(np.where(mask, weights, 0.0))
    if a.nnz == 0:
        raise ConfigError("sampled adjacency has no links; raise node_density")
    radius = spectral_radius(a)
    if radius < 1e-12:
        raise ConfigError("sampled adjacency is nilpotent to tolerance; cannot rescale")
    a = a * (params.spectral_target / radius)
    a.sort_indices()

    w_in = rng.uniform(-params.input_scale, params.input_scale, size=(n, input_dim))

    coo = a.tocoo()
    order = np.lexsort((coo.col, coo.row))     # CSR row-major order
    link_rows = coo.row[order].astype(np.int64)
    link_cols = coo.col[order].astype(np.int64)
    links = np.column_stack([link_cols, link_rows])  # (src, dst)

    topo = ReservoirTopology(node_adj=a, w_in=w_in, links=links,
                             link_rows=link_rows, link_cols=link_cols)
    phase_topo = build_phase_topology(links, phase_density,
                                      seed=seed_phase.generate_state(1)[0],
                                      n_nodes=n)
    return topo, phase_topo


def modulation_factors(phi: np.ndarray, m: float) -> np.ndarray:
    """Per-link strength multiplier, bounded in [1 - m, 1]."""
    return 1.0 - 0.5 * m * (1.0 + np.sin(phi))


def modulated_adjacency(topo: ReservoirTopology, phase: PhaseState,
                        m: float) -> sp.csr_matrix:
    """A copy of the adjacency with every weight scaled by its link's phase."""
    if phase.phi.shape[0] != topo.n_links:
        raise IndexMismatchError(
            f"phase count {phase.phi.shape[0]} != link count {topo.n_links}")
    out = topo.node_adj.copy()
    out.data = topo.node_adj.data * modulation_factors(phase.phi, m)
    return out


def reservoir_step(state: ReservoirState, u: np.ndarray, phase: PhaseState,
                   topo: ReservoirTopology, params: ReservoirParams) -> ReservoirState:
    """Leaky-tanh node update using the phase-modulated adjacency."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape[0] != topo.w_in.shape[1]:
        raise DimensionMismatchError(
            f"input dim {u.shape[0]} != W_in width {topo.w_in.shape[1]}")
    if phase.phi.shape[0] != topo.n_links:
        raise IndexMismatchError(
            f"phase count {phase.phi.shape[0]} != link count {topo.n_links}")
    data = topo.node_adj.data * modulation_factors(phase.phi, params.mod_depth)
    recur = np.bincount(topo.link_rows, weights=data * state.n[topo.link_cols],
                        minlength=topo.n_nodes)
    pre = recur + topo.w_in @ u + params.bias_vector()
    n_new = params.alpha * state.n + (1.0 - params.alpha) * np.tanh(pre)
    return ReservoirState(n_new, state.t + 1)


def readout(w_out: np.ndarray, state: ReservoirState) -> np.ndarray:
    w_out = np.asarray(w_out)
    if w_out.ndim != 2 or w_out.shape[1] != state.n.shape[0]:
        raise DimensionMismatchError(
            f"readout shape {w_out.shape} incompatible with state size {state.n.shape[0]}")
    return w_out @ state.n
