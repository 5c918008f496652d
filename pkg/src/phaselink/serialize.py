"""On-disk formats: trajectory/order CSVs, sparse triplets, dense binaries,
and the trained-model bundle directory.

All text numbers are written with 17 significant digits so round-tripping
is bit-exact. The dense binary layout is magic "DBL1", a uint8 rank,
3 reserved bytes, little-endian uint64 dims, then little-endian float64
values in C order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .dynsys import SystemSpec, Trajectory
from .errors import BundleError, ConfigError
from .learner import TargetingConfig, TrainConfig
from .phasenet import PhaseParams, PhaseTopology
from .reservoir import ReservoirParams, ReservoirTopology

BUNDLE_FORMAT_VERSION = 1

_MAGIC = b"DBL1"


def fmt(x: float) -> str:
    return f"{x:.17g}"


def state_key(lam: float) -> str:
    """Shortest round-trip float string, used for state names and filenames."""
    return repr(float(lam))


def write_trajectory_csv(path: str | Path, traj: Trajectory) -> None:
    header = "t,lambda," + ",".join(f"x{i}" for i in range(traj.dim))
    lines = [header]
    for k in range(traj.n_frames):
        vals = [fmt(k * traj.dt), fmt(traj.lam[k])]
        vals += [fmt(v) for v in traj.frames[k]]
        lines.append(",".join(vals))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trajectory_csv(path: str | Path) -> Trajectory:
    lines = Path(path).read_text().strip().splitlines()
    if not lines or not lines[0].startswith("t,lambda"):
        raise ConfigError(f"{path} is not a trajectory CSV")
    rows = [list(map(float, ln.split(","))) for ln in lines[1:]]
    arr = np.asarray(rows)
    if arr.shape[0] < 2:
        raise ConfigError("trajectory CSV needs at least 2 frames")
    dt = arr[1, 0] - arr[0, 0]
    return Trajectory(dt, arr[:, 2:], arr[:, 1])


def write_order_csv(path: str | Path, order_log: np.ndarray) -> None:
    lines = ["t,R,mean_phase"]
    for t, r, mp in order_log:
        lines.append(f"{fmt(t)},{fmt(r)},{fmt(mp)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_order_csv(path: str | Path) -> np.ndarray:
    lines = Path(path).read_text().strip().splitlines()
    return np.asarray([list(map(float, ln.split(","))) for ln in lines[1:]])


def write_sparse_triplet(path: str | Path, mat: sp.spmatrix) -> None:
    """Header `rows cols nnz`, then one `row col value` line per nonzero."""
    coo = sp.coo_matrix(mat)
    order = np.lexsort((coo.col, coo.row))
    lines = [f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}"]
    for i in order:
        lines.append(f"{coo.row[i]} {coo.col[i]} {fmt(coo.data[i])}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_sparse_triplet(path: str | Path) -> sp.csr_matrix:
    lines = Path(path).read_text().strip().splitlines()
    try:
        rows, cols, nnz = map(int, lines[0].split())
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{path} is not a sparse triplet file") from exc
    if len(lines) - 1 != nnz:
        raise ConfigError(f"{path}: header promises {nnz} entries, found {len(lines) - 1}")
    r = np.empty(nnz, dtype=np.int64)
    c = np.empty(nnz, dtype=np.int64)
    v = np.empty(nnz)
    for i, ln in enumerate(lines[1:]):
        a, b, val = ln.split()
        r[i], c[i], v[i] = int(a), int(b), float(val)
    return sp.csr_matrix((v, (r, c)), shape=(rows, cols))


def write_dense(path: str | Path, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=float)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<B3x", arr.ndim))
        for d in arr.shape:
            fh.write(struct.pack("<Q", d))
        fh.write(arr.astype("<f8", copy=False).tobytes(order="C"))


def read_dense(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ConfigError(f"{path}: bad magic for dense binary format")
    ndim = struct.unpack_from("<B", raw, 4)[0]
    dims = struct.unpack_from(f"<{ndim}Q", raw, 8)
    offset = 8 + 8 * ndim
    data = np.frombuffer(raw, dtype="<f8", offset=offset)
    expected = int(np.prod(dims)) if ndim else 1
    if data.size != expected:
        raise ConfigError(f"{path}: payload size {data.size} != header {expected}")
    return data.reshape(dims).copy()


@dataclass
class ModelBundle:
    """Everything needed to rebuild a trained twin session."""

    manifest: dict
    rtopo: ReservoirTopology
    rparams: ReservoirParams
    ptopo: PhaseTopology
    pparams: PhaseParams
    w_out: np.ndarray
    system: SystemSpec
    train_cfg: TrainConfig
    targeting_cfg: TargetingConfig
    state_trajectories: dict[str, Trajectory]   # per targeted lambda value
    state_lambdas: list[float]


def save_model_bundle(out_dir: str | Path, *, rtopo: ReservoirTopology,
                      rparams: ReservoirParams, ptopo: PhaseTopology,
                      pparams: PhaseParams, w_out: np.ndarray,
                      system: SystemSpec, train_cfg: TrainConfig,
                      targeting_cfg: TargetingConfig,
                      state_trajectories: dict[float, Trajectory],
                      seeds: dict, extra: dict | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    write_sparse_triplet(out / "node_adj.triplet", rtopo.node_adj)
    write_sparse_triplet(out / "phase_adj.triplet", ptopo.raw_phase_adj)
    write_dense(out / "w_in.bin", rtopo.w_in)
    write_dense(out / "w_out.bin", w_out)
    write_dense(out / "omega0.bin", pparams.omega0)
    write_dense(out / "gamma.bin", pparams.gamma_lag)
    write_dense(out / "bias.bin", rparams.bias_vector())

    states = []
    for lam, traj in state_trajectories.items():
        name = f"state_{state_key(lam)}.csv"
        write_trajectory_csv(out / name, traj)
        states.append({"lambda": lam, "trajectory": name})

    manifest = {
        "format_version": BUNDLE_FORMAT_VERSION,
        "system": {"kind": system.kind.value, "sigma": system.sigma,
                   "beta_lorenz": system.beta_lorenz, "beta_mg": system.beta_mg,
                   "gamma_mg": system.gamma_mg, "n_exp": system.n_exp},
        "reservoir": {"n_nodes": rparams.n_nodes, "node_density": rparams.node_density,
                      "spectral_target": rparams.spectral_target, "alpha": rparams.alpha,
                      "input_scale": rparams.input_scale, "mod_depth": rparams.mod_depth},
        "phase": {"eps1": pparams.eps1, "eps2": pparams.eps2,
                  "lambda_density": pparams.lambda_density,
                  "omega0_value": pparams.omega0_value},
        "train": {"warmup_steps": train_cfg.warmup_steps, "train_steps": train_cfg.train_steps,
                  "ridge_beta": train_cfg.ridge_beta,
                  "predict_warmup_steps": train_cfg.predict_warmup_steps, "dt": train_cfg.dt},
        "targeting": {"sweep_omega": targeting_cfg.sweep_omega,
                      "sweep_steps": targeting_cfg.sweep_steps,
                      "r_equilibrium_tol": targeting_cfg.r_equilibrium_tol,
                      "r_window": targeting_cfg.r_window,
                      "min_equilibrium_steps": targeting_cfg.min_equilibrium_steps,
                      "loss_window": targeting_cfg.loss_window,
                      "loss": targeting_cfg.loss if isinstance(targeting_cfg.loss, str) else "rmse",
                      "probe_stride": targeting_cfg.probe_stride,
                      "free_run_horizon": targeting_cfg.free_run_horizon,
                      "free_run_discard": targeting_cfg.free_run_discard,
                      "ref_window": targeting_cfg.ref_window},
        "files": {"node_adj": "node_adj.triplet", "phase_adj": "phase_adj.triplet",
                  "w_in": "w_in.bin", "w_out": "w_out.bin", "omega0": "omega0.bin",
                  "gamma": "gamma.bin", "bias": "bias.bin"},
        "states": states,
        "seeds": seeds,
        "input_dim": int(rtopo.w_in.shape[1]),
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return out


def load_model_bundle(bundle_dir: str | Path) -> ModelBundle:
    bundle = Path(bundle_dir)
    manifest_path = bundle / "manifest.json"
    if not manifest_path.exists():
        raise BundleError(f"no manifest.json in {bundle}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise BundleError(f"manifest.json is not valid JSON: {exc}") from exc

    version = manifest.get("format_version")
    if version != BUNDLE_FORMAT_VERSION:
        raise BundleError(
            f"bundle format {version!r} incompatible with supported {BUNDLE_FORMAT_VERSION}")
    required = ("system", "reservoir", "phase", "train", "targeting", "files",
                "states", "seeds", "input_dim")
    missing = [k for k in required if k not in manifest]
    if missing:
        raise BundleError(f"manifest missing keys: {missing}")

    try:
        files = manifest["files"]
        node_adj = read_sparse_triplet(bundle / files["node_adj"])
        phase_adj = read_sparse_triplet(bundle / files["phase_adj"])
        w_in = read_dense(bundle / files["w_in"])
        w_out = read_dense(bundle / files["w_out"])
        omega0 = read_dense(bundle / files["omega0"])
        gamma = read_dense(bundle / files["gamma"])
        bias = read_dense(bundle / files["bias"])

        r = manifest["reservoir"]
        rparams = ReservoirParams(n_nodes=r["n_nodes"], node_density=r["node_density"],
                                  spectral_target=r["spectral_target"], alpha=r["alpha"],
                                  input_scale=r["input_scale"], mod_depth=r["mod_depth"],
                                  bias=bias)
        node_adj.sort_indices()
        coo = node_adj.tocoo()
        order = np.lexsort((coo.col, coo.row))
        link_rows = coo.row[order].astype(np.int64)
        link_cols = coo.col[order].astype(np.int64)
        links = np.column_stack([link_cols, link_rows])
        rtopo = ReservoirTopology(node_adj=node_adj, w_in=w_in, links=links,
                                  link_rows=link_rows, link_cols=link_cols)

        ph = manifest["phase"]
        ptopo = _phase_topology_from_raw(links, phase_adj, rparams.n_nodes)
        pparams = PhaseParams(omega0=omega0, eps1=ph["eps1"], eps2=ph["eps2"],
                              gamma_lag=gamma, lambda_density=ph["lambda_density"],
                              omega0_value=ph["omega0_value"])

        sysd = manifest["system"]
        system = SystemSpec(kind=_system_kind(sysd["kind"]), sigma=sysd["sigma"],
                            beta_lorenz=sysd["beta_lorenz"], beta_mg=sysd["beta_mg"],
                            gamma_mg=sysd["gamma_mg"], n_exp=sysd["n_exp"])

        tr = manifest["train"]
        train_cfg = TrainConfig(warmup_steps=tr["warmup_steps"], train_steps=tr["train_steps"],
                                ridge_beta=tr["ridge_beta"],
                                predict_warmup_steps=tr["predict_warmup_steps"], dt=tr["dt"])
        tg = manifest["targeting"]
        targeting_cfg = TargetingConfig(
            sweep_omega=tg["sweep_omega"], sweep_steps=tg["sweep_steps"],
            r_equilibrium_tol=tg["r_equilibrium_tol"], r_window=tg["r_window"],
            min_equilibrium_steps=tg.get("min_equilibrium_steps", 600),
            loss_window=tg["loss_window"], loss=tg.get("loss", "rmse"),
            probe_stride=tg.get("probe_stride", 40),
            free_run_horizon=tg.get("free_run_horizon", 500),
            free_run_discard=tg.get("free_run_discard", 100),
            ref_window=tg.get("ref_window", 600))

        state_trajs = {}
        lambdas = []
        for entry in manifest["states"]:
            lam = float(entry["lambda"])
            state_trajs[state_key(lam)] = read_trajectory_csv(bundle / entry["trajectory"])
            lambdas.append(lam)
    except (KeyError, TypeError, ValueError, ConfigError, OSError) as exc:
        raise BundleError(f"bundle {bundle} is corrupt or incomplete: {exc}") from exc

    if w_out.shape != (manifest["input_dim"], rparams.n_nodes):
        raise BundleError(
            f"w_out shape {w_out.shape} inconsistent with manifest dims")
    if omega0.shape[0] != node_adj.nnz:
        raise BundleError("omega0 length inconsistent with link count")

    return ModelBundle(manifest=manifest, rtopo=rtopo, rparams=rparams, ptopo=ptopo,
                       pparams=pparams, w_out=w_out, system=system, train_cfg=train_cfg,
                       targeting_cfg=targeting_cfg, state_trajectories=state_trajs,
                       state_lambdas=lambdas)


def _system_kind(name: str):
    from .dynsys import SystemKind
    try:
        return SystemKind(name)
    except ValueError as exc:
        raise BundleError(f"unknown system kind {name!r}") from exc


def _phase_topology_from_raw(links: np.ndarray, raw_phase_adj: sp.csr_matrix,
                             n_nodes: int) -> PhaseTopology:
    """Rebuild the normalized phase topology from its stored binary pieces."""
    from .phasenet import PhaseTopology as PT, _row_normalize

    n_links = links.shape[0]
    if raw_phase_adj.shape != (n_links, n_links):
        raise BundleError(
            f"phase adjacency shape {raw_phase_adj.shape} != link count {n_links}")
    rows, cols = [], []
    for l, (src, dst) in enumerate(links):
        rows.append(src)
        cols.append(l)
        if dst != src:
            rows.append(dst)
            cols.append(l)
    raw_q = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_nodes, n_links))
    return PT(n_links=n_links, n_nodes=n_nodes, links=links,
              phase_adj_norm=_row_normalize(raw_phase_adj),
              incidence_norm=_row_normalize(raw_q.T.tocsr()),
              raw_phase_adj=raw_phase_adj, raw_incidence=raw_q)
