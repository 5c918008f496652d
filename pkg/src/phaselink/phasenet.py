"""Oscillator phases living on network links.

Every directed link of the node network carries a phase. Phases couple to
the local mean field of their phase-neighbors, with a coupling amplitude
gated by the activity of the nodes the link touches:

    dphi/dt = omega0 + (eps1 + eps2 * Qhat^T n*) . sin(Psi - Phi + gamma)

where n* = (n + 1)/2 rescales node states into (0, 1) so that an inactive
node contributes no link-to-link interaction, and Psi is the angle of each
link's local mean field. Synchrony is summarized by the global order
parameter R and mean phase <Phi>.

Conventions: phases are stored wrapped to [-pi, pi); an unwrapped
accumulator is kept alongside for winding diagnostics; a mean field of
modulus < 1e-12 gets angle 0 (the deterministic replacement for the
floating-point atan2(0, 0) artifact).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError

DEGENERATE_MODULUS = 1e-12


def wrap_phase(phi):
    """Map angles to [-pi, pi)."""
    return np.mod(np.asarray(phi) + np.pi, 2.0 * np.pi) - np.pi


def _row_normalize(mat: sp.csr_matrix) -> sp.csr_matrix:
    """L1-normalize each row; all-zero rows stay zero."""
    mat = sp.csr_matrix(mat, dtype=float)
    sums = np.asarray(np.abs(mat).sum(axis=1)).ravel()
    inv = np.where(sums > 0, 1.0 / np.where(sums > 0, sums, 1.0), 0.0)
    return sp.diags(inv) @ mat


@dataclass
class PhaseTopology:
    """Link-to-link coupling graph and link-to-node incidence.

    phase_adj_norm is the row-normalized link adjacency (N_l x N_l),
    incidence_norm the row-normalized transposed incidence (N_l x N_n).
    The raw binary matrices are kept for inspection and serialization.
    """

    n_links: int
    n_nodes: int
    links: np.ndarray                 # (N_l, 2) (src, dst) node indices
    phase_adj_norm: sp.csr_matrix
    incidence_norm: sp.csr_matrix
    raw_phase_adj: sp.csr_matrix
    raw_incidence: sp.csr_matrix      # Q, (N_n x N_l)


@dataclass
class PhaseParams:
    omega0: np.ndarray                # natural frequency per link
    eps1: float
    eps2: float
    gamma_lag: np.ndarray             # phase lag per link
    lambda_density: float             # fraction of links with nonzero omega0
    omega0_value: float

    @classmethod
    def build(cls, n_links: int, omega0_value: float = 0.05,
              lambda_density: float = 0.5, eps1: float = 0.0, eps2: float = 1.0,
              gamma: float | np.ndarray = 0.0, seed: int = 0) -> "PhaseParams":
        """Assign omega0_value to a seeded sample of round(lambda * N_l) links."""
        if not 0.0 < lambda_density <= 1.0:
            raise ConfigError("lambda_density must be in (0, 1]")
        rng = np.random.default_rng(seed)
        n_active = int(round(lambda_density * n_links))
        omega0 = np.zeros(n_links)
        idx = rng.choice(n_links, size=n_active, replace=False)
        omega0[idx] = omega0_value
        gamma_vec = np.broadcast_to(np.asarray(gamma, dtype=float), (n_links,)).copy()
        return cls(omega0=omega0, eps1=eps1, eps2=eps2, gamma_lag=gamma_vec,
                   lambda_density=lambda_density, omega0_value=omega0_value)


@dataclass
class PhaseState:
    phi: np.ndarray          # wrapped to [-pi, pi)
    t: float = 0.0
    unwrapped: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.phi = wrap_phase(np.asarray(self.phi, dtype=float))
        if self.unwrapped is None:
            self.unwrapped = self.phi.copy()

    def copy(self) -> "PhaseState":
        return PhaseState(self.phi.copy(), self.t, self.unwrapped.copy())

    @classmethod
    def random(cls, n_links: int, seed: int = 0, t: float = 0.0) -> "PhaseState":
        rng = np.random.default_rng(seed)
        return cls(rng.uniform(-np.pi, np.pi, size=n_links), t)


@dataclass(frozen=True)
class OrderSample:
    R: float
    mean_phase: float
    t: float


def build_phase_topology(reservoir_links: Sequence[tuple[int, int]] | np.ndarray,
                         phase_density: float, seed: int,
                         n_nodes: int | None = None) -> PhaseTopology:
    """Sample the binary link-coupling graph and build the incidence matrices.

    Off-diagonal entries of the link adjacency are i.i.d. Bernoulli with the
    given density (a link never couples to its own phase). The incidence Q
    has a 1 wherever a link touches a node, self-loops included.
    """
    links = np.asarray(reservoir_links, dtype=np.int64)
    if links.size == 0:
        raise ConfigError("reservoir link list is empty")
    if not 0.0 < phase_density <= 1.0:
        raise ConfigError("phase_density must be in (0, 1]")
    n_links = links.shape[0]
    if n_nodes is None:
        n_nodes = int(links.max()) + 1

    rng = np.random.default_rng(seed)
    mask = rng.random((n_links, n_links)) < phase_density
    np.fill_diagonal(mask, False)
    raw_adj = sp.csr_matrix(mask.astype(np.float64))

    rows = []
    cols = []
    for l, (src, dst) in enumerate(links):
        rows.append(src)
        cols.append(l)
        if dst != src:
            rows.append(dst)
            cols.append(l)
    raw_q = sp.csr_matrix((np.ones(len(rows)), (rows, cols)),
                          shape=(n_nodes, n_links))

    return PhaseTopology(
        n_links=n_links,
        n_nodes=n_nodes,
        links=links,
        phase_adj_norm=_row_normalize(raw_adj),
        incidence_norm=_row_normalize(raw_q.T.tocsr()),
        raw_phase_adj=raw_adj,
        raw_incidence=raw_q,
    )


def _angle(z: np.ndarray) -> np.ndarray:
    ang = np.angle(z)
    return np.where(np.abs(z) < DEGENERATE_MODULUS, 0.0, ang)


def local_mean_field(state: PhaseState, topo: PhaseTopology) -> tuple[np.ndarray, np.ndarray]:
    """Per-link local order parameter r and mean-field angle psi."""
    z = topo.phase_adj_norm @ np.exp(1j * state.phi)
    r = np.minimum(np.abs(z), 1.0)
    return r, _angle(z)


def phase_step(state: PhaseState, node_states: np.ndarray, topo: PhaseTopology,
               params: PhaseParams, dt: float = 1.0) -> PhaseState:
    """One forward-Euler step of the activity-gated phase dynamics."""
    n_star = (np.asarray(node_states) + 1.0) / 2.0
    amp = params.eps1 + params.eps2 * (topo.incidence_norm @ n_star)
    _, psi = local_mean_field(state, topo)
    dphi = params.omega0 + amp * np.sin(psi - state.phi + params.gamma_lag)
    unwrapped = state.unwrapped + dphi * dt
    return PhaseState(wrap_phase(state.phi + dphi * dt), state.t + dt, unwrapped)


def forced_phase_step(state: PhaseState, g_value: float, dt: float = 1.0) -> PhaseState:
    """Advance every phase uniformly by g*dt, replacing the coupled dynamics.

    A uniform shift preserves all pairwise phase differences, hence R.
    """
    shift = g_value * dt
    return PhaseState(wrap_phase(state.phi + shift), state.t + dt,
                      state.unwrapped + shift)


def global_order(state: PhaseState) -> OrderSample:
    """Modulus and angle of the mean unit phasor over all links."""
    if state.phi.size < 1:
        raise ConfigError("need at least one link phase")
    z = np.mean(np.exp(1j * state.phi))
    r = min(abs(z), 1.0)
    ang = 0.0 if abs(z) < DEGENERATE_MODULUS else float(np.angle(z))
    return OrderSample(R=float(r), mean_phase=ang, t=state.t)


def isolated_phase_analytic(omega0: float, eps: float, psi0: float,
                            phi0: float, t) -> np.ndarray | float:
    """Closed-form phase of a single link coupled to a constant field at psi0.

    Solves dphi/dt = omega0 + eps*sin(psi0 - phi). After translating
    theta = phi - psi0 the half-angle substitution u = tan(theta/2) gives a
    constant-coefficient Riccati equation whose solution is a Moebius
    transform of exp(mu*t) with mu = sqrt(eps^2 - omega0^2): hyperbolic
    (oscillation death) for |omega0| < |eps|, trigonometric winding for
    |omega0| > |eps|. Returns the wrapped phase.
    """
    if omega0 == 0.0 and eps == 0.0:
        raise ConfigError("omega0 and eps cannot both be zero")
    t_arr = np.asarray(t, dtype=float)
    theta0 = float(wrap_phase(phi0 - psi0))
    u0 = math.tan(theta0 / 2.0)

    if omega0 == 0.0:
        # Riccati degenerates to linear decay: u(t) = u0 * exp(-eps t).
        if u0 == 0.0:
            return wrap_phase(psi0 + np.zeros_like(t_arr))
        with np.errstate(over="ignore"):
            u = u0 * np.exp(-eps * t_arr)
        return wrap_phase(psi0 + 2.0 * np.arctan(u))

    mu = np.sqrt(complex(eps * eps - omega0 * omega0))
    a = (eps + mu) / omega0            # repelling root of the Riccati flow
    b = (eps - mu) / omega0            # attracting root
    ca = u0 - a
    cb = u0 - b

    if mu == 0:
        # double root: u - a blows down rationally, u(t) = a + w0/(1 - w0*omega0*t/2)
        w0 = u0 - a.real
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(w0 == 0.0, 0.0, w0 / (1.0 - w0 * (omega0 / 2.0) * t_arr))
        return wrap_phase(psi0 + 2.0 * np.arctan(a.real + w))

    growth = np.real(mu) * t_arr
    saturated = growth > 600.0
    with np.errstate(over="ignore", invalid="ignore"):
        e = np.exp(np.where(saturated, 0.0, mu * t_arr))
        num = a * cb - b * ca * e
        den = cb - ca * e
        ratio = num / np.where(np.abs(den) == 0.0, 1.0, den)
        u = np.where(np.abs(den) == 0.0, np.inf, np.real(ratio))
    if np.real(mu) > 0 and np.any(saturated):
        # hyperbolic branch long after convergence: exp would overflow, but
        # the Moebius map has settled on a root (the repelling one only if
        # the motion started exactly there)
        limit = float(np.real(a if ca == 0 else b))
        u = np.where(saturated, limit, u)
    return wrap_phase(psi0 + 2.0 * np.arctan(u))
