"""Configuration-driven experiment runners.

Each experiment resolves a JSON-friendly config dict against its defaults,
runs the protocol, writes every artifact (trajectory CSV, order-parameter
CSV, change report, prediction CSVs, summary JSON), and returns the
summary. Everything is seeded explicitly so artifacts regenerate
bit-identically; summaries carry the resolved config.

Default hyperparameters were calibrated on this codebase and are recorded
here per experiment; all of them can be overridden from the config file.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import (
    classify_attractor,
    detect_equilibrium_shift,
    find_collapse_frame,
    measure_cycle_frames,
    moving_average,
    pearson_correlation,
)
from .dynsys import ParamSchedule, SystemKind, SystemSpec, Trajectory, estimate_thomas_b, simulate
from .errors import ConfigError, DivergenceError
from .learner import (
    COUPLED,
    FROZEN,
    TargetingConfig,
    TrainConfig,
    TwinSession,
    closed_loop_predict,
    harvest_states,
    one_step_nrmse,
    ridge_fit,
    target_mean_phase,
)
from .phasenet import PhaseParams, PhaseState, wrap_phase
from .reservoir import ReservoirParams, ReservoirState, build_reservoir
from .serialize import (
    fmt,
    state_key,
    load_model_bundle,
    save_model_bundle,
    write_order_csv,
    write_trajectory_csv,
)

SUMMARY_SCHEMA_VERSION = 1

EXPERIMENT_KINDS = ("detect_thomas", "detect_mackey", "detect_lorenz",
                    "twin_train", "twin_target", "twin_baseline")


def default_config(experiment: str) -> dict:
    """Calibrated defaults for each experiment protocol."""
    common_reservoir = {"n_nodes": 300, "node_density": 0.02, "spectral_target": 0.9,
                        "alpha": 0.2, "input_scale": 0.4, "mod_depth": 0.4, "seed": 7}
    common_phase = {"phase_density": 0.05, "eps1": 0.0, "eps2": 0.02,
                    "omega0_value": 0.004, "lambda_density": 0.5,
                    "params_seed": 11, "init_seed": 13}
    if experiment == "detect_thomas":
        return {
            "experiment": experiment,
            "system": {"kind": "thomas", "dt": 0.05, "record_every": 2,
                       "n_frames": 6400, "warmup_discard": 2000, "seed": 1,
                       "schedule": {"kind": "step", "base_value": 0.18,
                                    "switch_frames": [[3200, 0.29]]}},
            "reservoir": dict(common_reservoir),
            "phase": dict(common_phase),
            "detector": {"window": 150, "k_sigma": 4.0, "lead_frames": 1200,
                         "plateau_window": 1500, "plateau_gap": 50},
        }
    if experiment == "detect_lorenz":
        return {
            "experiment": experiment,
            "system": {"kind": "lorenz", "dt": 0.02, "record_every": 2,
                       "n_frames": 9000, "warmup_discard": 2000, "seed": 2,
                       "schedule": {"kind": "step", "base_value": 24.5,
                                    "switch_frames": [[3000, 23.5]]}},
            "reservoir": dict(common_reservoir, input_scale=0.05),
            "phase": dict(common_phase),
            "detector": {"window": 100, "k_sigma": 4.0, "lead_frames": 800,
                         "plateau_window": 1500, "plateau_gap": 50},
            "collapse": {"window": 200, "frac": 0.05},
        }
    if experiment == "detect_mackey":
        return {
            "experiment": experiment,
            "system": {"kind": "mackey_glass", "dt": 0.1, "record_every": 10,
                       "n_frames": 5060, "warmup_discard": 2000, "seed": 9,
                       "schedule": {"kind": "sinusoid", "center": 22.0,
                                    "amplitude": 2.0, "angular_frequency": 0.007}},
            "reservoir": dict(common_reservoir, n_nodes=500, spectral_target=1.05,
                              alpha=0.6, input_scale=2.0),
            "phase": dict(common_phase, phase_density=0.02, eps2=0.1, omega0_value=0.02),
            "tracking": {"smooth_window": 300, "lead_frames": 1200},
        }
    if experiment in ("twin_train", "twin_target", "twin_baseline"):
        cfg = {
            "experiment": experiment,
            "system": {"kind": "thomas", "dt": 0.05, "record_every": 10,
                       "warmup_discard": 2000, "seed": 2},
            "protocol": {"lambdas": [0.18, 0.29], "dwell_min": 500, "dwell_max": 1100,
                         "total_frames": 24001, "schedule_seed": 123},
            "reservoir": dict(common_reservoir, mod_depth=0.8),
            "phase": dict(common_phase, eps2=0.1, omega0_value=0.02),
            "train": {"warmup_steps": 500, "train_steps": 23500, "ridge_beta": 1e-6,
                      "predict_warmup_steps": 2000},
        }
        if experiment == "twin_target":
            cfg["targeting"] = {"sweep_omega": 0.0025, "sweep_steps": 2650,
                                "r_equilibrium_tol": 0.01, "r_window": 200,
                                "min_equilibrium_steps": 600,
                                "loss": "free_run_stats", "probe_stride": 40,
                                "free_run_horizon": 500, "free_run_discard": 100,
                                "ref_window": 600, "init_seed": 17}
            cfg["prediction"] = {"horizon": 5000, "test_frames": 8000,
                                 "test_seeds": {"0.18": 31, "0.29": 37}}
            cfg["offset_sweep"] = {"state": 0.29,
                                   "offsets": [-0.9, -0.45, 0.0, 0.45, 0.9],
                                   "horizon": 4500, "cluster_gap": 0.005}
        if experiment == "twin_baseline":
            cfg["reservoir"]["mod_depth"] = 0.0
            cfg["train"]["ridge_beta"] = 0.3
            cfg["prediction"] = {"horizon": 5000, "test_frames": 3000,
                                 "test_seeds": {"0.18": 31, "0.29": 37}}
        return cfg
    raise ConfigError(f"unknown experiment {experiment!r}; "
                      f"expected one of {EXPERIMENT_KINDS}")


def merge_config(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = merge_config(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def resolve_config(cfg: dict) -> dict:
    if "experiment" not in cfg:
        raise ConfigError("config needs an 'experiment' key")
    resolved = merge_config(default_config(cfg["experiment"]), cfg)
    return resolved


def _system_spec(sys_cfg: dict) -> SystemSpec:
    kind = SystemKind(sys_cfg["kind"])
    if kind == SystemKind.THOMAS:
        return SystemSpec.thomas()
    if kind == SystemKind.LORENZ:
        return SystemSpec.lorenz(sigma=sys_cfg.get("sigma", 10.0),
                                 beta=sys_cfg.get("beta", 8.0 / 3.0))
    return SystemSpec.mackey_glass(beta=sys_cfg.get("beta", 0.2),
                                   gamma=sys_cfg.get("gamma", 0.1),
                                   n=sys_cfg.get("n", 10.0))


def _schedule(sys_cfg: dict) -> ParamSchedule:
    sched = sys_cfg["schedule"]
    frame_dt = sys_cfg["dt"] * sys_cfg["record_every"]
    if sched["kind"] == "constant":
        return ParamSchedule.constant(sched["base_value"])
    if sched["kind"] == "step":
        # switch times given in frames; converted with the same expression
        # used for frame timestamps, so the lambda column is exact
        switches = [(frame * frame_dt, value) for frame, value in sched["switch_frames"]]
        return ParamSchedule.step_switch(sched["base_value"], switches)
    if sched["kind"] == "sinusoid":
        return ParamSchedule.sinusoid(sched["center"], sched["amplitude"],
                                      sched["angular_frequency"])
    raise ConfigError(f"unknown schedule kind {sched['kind']!r}")


def _simulate(sys_cfg: dict, schedule: ParamSchedule | None = None,
              n_frames: int | None = None, seed: int | None = None) -> Trajectory:
    spec = _system_spec(sys_cfg)
    return simulate(spec,
                    schedule if schedule is not None else _schedule(sys_cfg),
                    n_frames if n_frames is not None else sys_cfg["n_frames"],
                    dt=sys_cfg["dt"],
                    warmup_discard=sys_cfg.get("warmup_discard", 2000),
                    seed=seed if seed is not None else sys_cfg["seed"],
                    record_every=sys_cfg["record_every"])


def build_session(cfg: dict, input_dim: int) -> TwinSession:
    r = cfg["reservoir"]
    p = cfg["phase"]
    rparams = ReservoirParams(n_nodes=r["n_nodes"], node_density=r["node_density"],
                              spectral_target=r["spectral_target"], alpha=r["alpha"],
                              input_scale=r["input_scale"], mod_depth=r["mod_depth"],
                              bias=r.get("bias", 0.0))
    rtopo, ptopo = build_reservoir(rparams, input_dim=input_dim, seed=r["seed"],
                                   phase_density=p["phase_density"])
    pparams = PhaseParams.build(rtopo.n_links, omega0_value=p["omega0_value"],
                                lambda_density=p["lambda_density"], eps1=p["eps1"],
                                eps2=p["eps2"], gamma=p.get("gamma", 0.0),
                                seed=p["params_seed"])
    return TwinSession(rtopo, rparams, ptopo, pparams,
                       ReservoirState.zeros(r["n_nodes"]),
                       PhaseState.random(rtopo.n_links, seed=p["init_seed"]),
                       phase_mode=COUPLED)


def _drive_open_loop(session: TwinSession, traj: Trajectory) -> np.ndarray:
    log = np.empty((traj.n_frames, 3))
    for k in range(traj.n_frames):
        session.drive(traj.frames[k])
        s = session.order()
        log[k] = (s.t, s.R, s.mean_phase)
    return log


@dataclass
class ExperimentResult:
    summary: dict
    artifacts: dict[str, Path]


def _write_summary(out: Path, summary: dict) -> Path:
    path = out / "summary.json"
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return path


def _prepare_out(cfg: dict, out_dir: str | Path | None) -> Path:
    out = Path(out_dir if out_dir is not None else cfg.get("output_dir", "experiment_out"))
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    return out


def _plateau_stats(series: np.ndarray, switch: int, window: int, gap: int) -> dict:
    pre = series[max(0, switch - window - gap): switch - gap]
    post = series[len(series) - window:]
    pooled = math.sqrt((float(np.std(pre)) ** 2 + float(np.std(post)) ** 2) / 2.0)
    separation = abs(float(np.mean(pre)) - float(np.mean(post)))
    return {
        "pre_mean": float(np.mean(pre)), "pre_std": float(np.std(pre)),
        "post_mean": float(np.mean(post)), "post_std": float(np.std(post)),
        "separation": separation,
        "separation_ratio": separation / max(pooled, 1e-300),
    }


def run_detect_thomas(cfg: dict, out_dir=None) -> ExperimentResult:
    out = _prepare_out(cfg, out_dir)
    sys_cfg = cfg["system"]
    traj = _simulate(sys_cfg)
    switch_frame = int(sys_cfg["schedule"]["switch_frames"][0][0])

    session = build_session(cfg, traj.dim)
    order_log = _drive_open_loop(session, traj)
    r_series = order_log[:, 1]

    det = cfg["detector"]
    lead = det["lead_frames"]
    report = detect_equilibrium_shift(r_series[lead:], det["window"], det["k_sigma"],
                                      true_switches=[switch_frame - lead])
    hits = [f + lead for f in report.frames()]
    latency = next((h - switch_frame for h in hits if h >= switch_frame), None)

    cycle = measure_cycle_frames(traj.frames[:switch_frame, 0])
    stats = _plateau_stats(r_series, switch_frame, det["plateau_window"], det["plateau_gap"])

    artifacts = {
        "trajectory": out / "trajectory.csv",
        "order": out / "order.csv",
        "change_report": out / "change_report.json",
    }
    write_trajectory_csv(artifacts["trajectory"], traj)
    write_order_csv(artifacts["order"], order_log)
    artifacts["change_report"].write_text(json.dumps(report.to_dict(), indent=2) + "\n")

    summary = {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "experiment": "detect_thomas",
        "config": cfg,
        "switch_frame": switch_frame,
        "cycle_frames": cycle,
        "plateaus": stats,
        "detected_frames": hits,
        "detection_latency_frames": latency,
        "detection_latency_cycles": None if latency is None else latency / cycle,
    }
    artifacts["summary"] = _write_summary(out, summary)
    return ExperimentResult(summary, artifacts)


def run_detect_lorenz(cfg: dict, out_dir=None) -> ExperimentResult:
    out = _prepare_out(cfg, out_dir)
    sys_cfg = cfg["system"]
    traj = _simulate(sys_cfg)
    switch_frame = int(sys_cfg["schedule"]["switch_frames"][0][0])

    x = traj.frames[:, 0]
    ref_std = float(np.std(x[500:switch_frame]))
    col = cfg["collapse"]
    collapse_frame = find_collapse_frame(x, ref_std, window=col["window"], frac=col["frac"])
    cycle = measure_cycle_frames(x[500:switch_frame])

    session = build_session(cfg, traj.dim)
    order_log = _drive_open_loop(session, traj)
    r_series = order_log[:, 1]

    det = cfg["detector"]
    lead = det["lead_frames"]
    true_switches = [switch_frame - lead]
    if collapse_frame is not None:
        true_switches.append(collapse_frame - lead)
    report = detect_equilibrium_shift(r_series[lead:], det["window"], det["k_sigma"],
                                      true_switches=true_switches)
    hits = [f + lead for f in report.frames()]
    switch_latency = next((h - switch_frame for h in hits if h >= switch_frame), None)
    collapse_distance = None
    if collapse_frame is not None and hits:
        collapse_distance = int(min(abs(h - collapse_frame) for h in hits))

    # regime means: stable chaos / transient chaos / dead
    seg_end = collapse_frame if collapse_frame is not None else traj.n_frames
    regimes = {
        "stable_chaos": float(np.mean(r_series[lead:switch_frame])),
        "transient_chaos": float(np.mean(r_series[switch_frame + 300: seg_end - 200]))
        if seg_end - 200 > switch_frame + 300 else None,
        "dead": float(np.mean(r_series[-1000:])) if collapse_frame is not None else None,
    }

    artifacts = {
        "trajectory": out / "trajectory.csv",
        "order": out / "order.csv",
        "change_report": out / "change_report.json",
    }
    write_trajectory_csv(artifacts["trajectory"], traj)
    write_order_csv(artifacts["order"], order_log)
    artifacts["change_report"].write_text(json.dumps(report.to_dict(), indent=2) + "\n")

    summary = {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "experiment": "detect_lorenz",
        "config": cfg,
        "switch_frame": switch_frame,
        "collapse_frame": collapse_frame,
        "cycle_frames": cycle,
        "regime_r_means": regimes,
        "detected_frames": hits,
        "switch_latency_frames": switch_latency,
        "switch_latency_cycles": None if switch_latency is None else switch_latency / cycle,
        "collapse_distance_frames": collapse_distance,
        "collapse_distance_cycles": None if collapse_distance is None else collapse_distance / cycle,
    }
    artifacts["summary"] = _write_summary(out, summary)
    return ExperimentResult(summary, artifacts)


def run_detect_mackey(cfg: dict, out_dir=None) -> ExperimentResult:
    out = _prepare_out(cfg, out_dir)
    traj = _simulate(cfg["system"])
    session = build_session(cfg, traj.dim)
    order_log = _drive_open_loop(session, traj)
    r_series = order_log[:, 1]

    tr = cfg["tracking"]
    smoothed = moving_average(r_series, tr["smooth_window"])
    lead = tr["lead_frames"]
    corr = pearson_correlation(smoothed[lead:], traj.lam[lead:])

    artifacts = {
        "trajectory": out / "trajectory.csv",
        "order": out / "order.csv",
        "smoothed": out / "smoothed_r.csv",
    }
    write_trajectory_csv(artifacts["trajectory"], traj)
    write_order_csv(artifacts["order"], order_log)
    lines = ["t,smoothed_R,lambda"]
    for k in range(traj.n_frames):
        lines.append(f"{fmt(k * traj.dt)},{fmt(smoothed[k])},{fmt(traj.lam[k])}")
    artifacts["smoothed"].write_text("\n".join(lines) + "\n")

    summary = {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "experiment": "detect_mackey",
        "config": cfg,
        "correlation": corr,
        "abs_correlation": abs(corr),
        "r_range": [float(r_series[lead:].min()), float(r_series[lead:].max())],
    }
    artifacts["summary"] = _write_summary(out, summary)
    return ExperimentResult(summary, artifacts)


def make_alternating_schedule(protocol: dict, frame_dt: float) -> ParamSchedule:
    """Aperiodic two-state alternation with seeded dwell times (in frames)."""
    rng = np.random.default_rng(protocol["schedule_seed"])
    lambdas = protocol["lambdas"]
    total = protocol["total_frames"]
    switches = []
    t_frame = 0
    state = 0
    while t_frame < total:
        t_frame += int(rng.integers(protocol["dwell_min"], protocol["dwell_max"] + 1))
        state = 1 - state
        if t_frame < total:
            switches.append((t_frame * frame_dt, lambdas[state]))
    return ParamSchedule.step_switch(lambdas[0], switches)


def _train_twin(cfg: dict):
    sys_cfg = cfg["system"]
    frame_dt = sys_cfg["dt"] * sys_cfg["record_every"]
    schedule = make_alternating_schedule(cfg["protocol"], frame_dt)
    traj = _simulate(sys_cfg, schedule=schedule, n_frames=cfg["protocol"]["total_frames"])
    session = build_session(cfg, traj.dim)
    tr = cfg["train"]
    train_cfg = TrainConfig(warmup_steps=tr["warmup_steps"], train_steps=tr["train_steps"],
                            ridge_beta=tr["ridge_beta"],
                            predict_warmup_steps=tr["predict_warmup_steps"], dt=frame_dt)
    s, u, order_log = harvest_states(traj, session, train_cfg)
    w = ridge_fit(s, u, train_cfg.ridge_beta)
    nrmse = one_step_nrmse(s, u, w)
    return traj, session, train_cfg, w, order_log, nrmse, frame_dt


def run_twin_train(cfg: dict, out_dir=None) -> ExperimentResult:
    out = _prepare_out(cfg, out_dir)
    traj, session, train_cfg, w, order_log, nrmse, frame_dt = _train_twin(cfg)
    sys_cfg = cfg["system"]

    # test trajectories per state ship with the bundle
    state_trajs = {}
    test_seeds = cfg.get("prediction", {}).get("test_seeds",
                                               {"0.18": 31, "0.29": 37})
    test_frames = cfg.get("prediction", {}).get("test_frames", 8000)
    for lam in cfg["protocol"]["lambdas"]:
        seed = int(test_seeds.get(state_key(lam), test_seeds.get(str(lam), 31)))
        state_trajs[lam] = _simulate(sys_cfg, schedule=ParamSchedule.constant(lam),
                                     n_frames=test_frames, seed=seed)

    targeting_cfg = _targeting_config(cfg.get("targeting", {}))
    bundle_dir = save_model_bundle(
        out / "bundle", rtopo=session.rtopo, rparams=session.rparams,
        ptopo=session.ptopo, pparams=session.pparams, w_out=w.w_out,
        system=_system_spec(sys_cfg), train_cfg=train_cfg,
        targeting_cfg=targeting_cfg, state_trajectories=state_trajs,
        seeds={"system": sys_cfg["seed"], "reservoir": cfg["reservoir"]["seed"],
               "phase_params": cfg["phase"]["params_seed"],
               "phase_init": cfg["phase"]["init_seed"],
               "schedule": cfg["protocol"]["schedule_seed"]},
        extra={"frame_dt": frame_dt, "record_every": sys_cfg["record_every"],
               "dt": sys_cfg["dt"], "state_lambdas": cfg["protocol"]["lambdas"]})

    # per-state equilibrium plateaus of R during training
    lam_per_step = traj.lam[: order_log.shape[0]]
    plateaus = {}
    for lam in cfg["protocol"]["lambdas"]:
        mask = lam_per_step == lam
        mask[: 2000] = False  # drop the initial transient
        if mask.any():
            plateaus[state_key(lam)] = {"r_mean": float(np.mean(order_log[mask, 1])),
                                        "r_std": float(np.std(order_log[mask, 1]))}

    # distinct equilibrium R levels per dwell; coexisting attractors (the two
    # symmetric periodic orbits) separate by the sign of the dwell's x-mean
    schedule = make_alternating_schedule(cfg["protocol"], frame_dt)
    boundaries = [0] + [int(round(t / frame_dt)) for t, _ in schedule.switches]
    boundaries.append(order_log.shape[0])
    groups: dict[tuple, list[float]] = {}
    for a, b in zip(boundaries, boundaries[1:]):
        if b - a < 300 or a < 2000 or b > order_log.shape[0]:
            continue
        lam = traj.lam[a + 1]
        branch = "+" if float(np.mean(traj.frames[a + 150: b, 0])) >= 0 else "-"
        groups.setdefault((lam, branch), []).append(
            float(np.mean(order_log[a + 150: b, 1])))
    r_levels = [{"lambda": lam, "branch": branch,
                 "r_mean": float(np.mean(vals)), "n_dwells": len(vals)}
                for (lam, branch), vals in sorted(groups.items())]

    artifacts = {
        "trajectory": out / "training_trajectory.csv",
        "order": out / "training_order.csv",
        "bundle": bundle_dir,
    }
    write_trajectory_csv(artifacts["trajectory"], traj)
    write_order_csv(artifacts["order"], order_log)

    summary = {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "experiment": "twin_train",
        "config": cfg,
        "one_step_nrmse": nrmse,
        "r_plateaus": plateaus,
        "r_levels": r_levels,
        "n_switches": len(schedule.switches),
        "bundle": str(bundle_dir),
    }
    artifacts["summary"] = _write_summary(out, summary)
    return ExperimentResult(summary, artifacts)


def _targeting_config(tcfg_dict: dict) -> TargetingConfig:
    d = dict(default_config("twin_target")["targeting"])
    d.update(tcfg_dict)
    d.pop("init_seed", None)
    return TargetingConfig(**d)


def run_twin_target(cfg: dict, out_dir=None, bundle_path: str | Path | None = None) -> ExperimentResult:
    """Target each training state and verify closed-loop recall.

    Trains in-process when no bundle path is given; with a bundle it reuses
    the stored model and test trajectories.
    """
    out = _prepare_out(cfg, out_dir)
    sys_cfg = cfg["system"]
    frame_dt = sys_cfg["dt"] * sys_cfg["record_every"]

    if bundle_path is not None:
        bundle = load_model_bundle(bundle_path)
        rtopo, rparams = bundle.rtopo, bundle.rparams
        ptopo, pparams = bundle.ptopo, bundle.pparams
        w = bundle.w_out
        state_trajs = {float(k): v for k, v in
                       ((lam, bundle.state_trajectories[state_key(lam)])
                        for lam in bundle.state_lambdas)}
        frame_dt = bundle.manifest.get("frame_dt", frame_dt)
    else:
        _, session0, _, w_fit, _, _, frame_dt = _train_twin(cfg)
        rtopo, rparams = session0.rtopo, session0.rparams
        ptopo, pparams = session0.ptopo, session0.pparams
        w = w_fit.w_out
        state_trajs = {}
        for lam in cfg["protocol"]["lambdas"]:
            seed = int(cfg["prediction"]["test_seeds"][state_key(lam)])
            state_trajs[lam] = _simulate(sys_cfg, schedule=ParamSchedule.constant(lam),
                                         n_frames=cfg["prediction"]["test_frames"],
                                         seed=seed)

    tcfg = _targeting_config(cfg["targeting"])
    init_seed = cfg["targeting"].get("init_seed", 17)
    horizon = cfg["prediction"]["horizon"]

    artifacts = {}
    states_summary = {}
    frozen_sessions = {}
    for lam, test in state_trajs.items():
        session = TwinSession(rtopo, rparams, ptopo, pparams,
                              ReservoirState.zeros(rparams.n_nodes),
                              PhaseState.random(rtopo.n_links, seed=init_seed),
                              phase_mode=COUPLED)
        res = target_mean_phase(test, session, w, tcfg)
        for k in range(res.frames_consumed, test.n_frames):
            session.drive(test.frames[k])
        frozen_sessions[lam] = session.copy()
        entry = {"r0": res.r0, "mean_phase0": res.mean_phase0, "t_r0": res.t_r0,
                 "frames_consumed": res.frames_consumed}
        try:
            pred = closed_loop_predict(session, w, horizon, frame_dt)
            traj_pred = pred.trajectory
            entry["attractor"] = classify_attractor(traj_pred).value
            if sys_cfg["kind"] == "thomas":
                entry["lambda_estimate"] = estimate_thomas_b(traj_pred, frame_dt)
                entry["lambda_error"] = abs(entry["lambda_estimate"] - lam)
            key = state_key(lam)
            artifacts[f"prediction_{key}"] = out / f"prediction_{key}.csv"
            write_trajectory_csv(artifacts[f"prediction_{key}"], traj_pred)
            artifacts[f"prediction_order_{key}"] = out / f"prediction_order_{key}.csv"
            write_order_csv(artifacts[f"prediction_order_{key}"], pred.order_log)
        except DivergenceError as exc:
            entry["attractor"] = "diverged"
            entry["diverged_at_frame"] = exc.frame
        sweep_path = out / f"targeting_sweep_{state_key(lam)}.csv"
        lines = ["frame,mean_phase,loss"]
        for row in res.sweep_log:
            lines.append(f"{fmt(row[0])},{fmt(row[1])},{fmt(row[2])}")
        sweep_path.write_text("\n".join(lines) + "\n")
        artifacts[f"targeting_sweep_{state_key(lam)}"] = sweep_path
        states_summary[state_key(lam)] = entry

    offset_summary = None
    off_cfg = cfg.get("offset_sweep")
    if off_cfg:
        offset_summary = _offset_sweep(off_cfg, frozen_sessions, w, frame_dt, out, artifacts)

    summary = {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "experiment": "twin_target",
        "config": cfg,
        "states": states_summary,
        "offset_sweep": offset_summary,
    }
    artifacts["summary"] = _write_summary(out, summary)
    return ExperimentResult(summary, artifacts)


def _offset_sweep(off_cfg: dict, frozen_sessions: dict, w: np.ndarray,
                  frame_dt: float, out: Path, artifacts: dict) -> dict:
    """Step the frozen mean phase through offsets and estimate each attractor."""
    lam = float(off_cfg["state"])
    base = frozen_sessions[lam]
    rows = []
    for offset in off_cfg["offsets"]:
        probe = base.copy()
        probe.pstate = PhaseState(wrap_phase(probe.pstate.phi + offset),
                                  probe.pstate.t, probe.pstate.unwrapped + offset)
        row = {"offset": float(offset)}
        try:
            pred = closed_loop_predict(probe, w, off_cfg["horizon"], frame_dt)
            row["lambda_estimate"] = estimate_thomas_b(pred.trajectory, frame_dt)
            row["attractor"] = classify_attractor(pred.trajectory).value
        except DivergenceError as exc:
            row["lambda_estimate"] = None
            row["attractor"] = "diverged"
        rows.append(row)

    estimates = [r["lambda_estimate"] for r in rows if r["lambda_estimate"] is not None]
    clusters: list[float] = []
    gap = off_cfg["cluster_gap"]
    for est in sorted(estimates):
        if not clusters or est - clusters[-1] > gap:
            clusters.append(est)
    path = out / "offset_sweep.csv"
    lines = ["offset,lambda_estimate,attractor"]
    for r in rows:
        le = "" if r["lambda_estimate"] is None else fmt(r["lambda_estimate"])
        lines.append(f"{fmt(r['offset'])},{le},{r['attractor']}")
    path.write_text("\n".join(lines) + "\n")
    artifacts["offset_sweep"] = path

    order = np.argsort([r["offset"] for r in rows])
    seq = [rows[i]["lambda_estimate"] for i in order if rows[i]["lambda_estimate"] is not None]
    monotone_steps = sum(1 for a, b in zip(seq, seq[1:]) if b <= a)
    return {"rows": rows, "n_distinct": len(clusters),
            "monotone_fraction": monotone_steps / max(len(seq) - 1, 1)}


def run_twin_baseline(cfg: dict, out_dir=None) -> ExperimentResult:
    out = _prepare_out(cfg, out_dir)
    sys_cfg = cfg["system"]
    if cfg["reservoir"]["mod_depth"] != 0.0:
        raise ConfigError("twin_baseline requires mod_depth = 0")
    traj, session, train_cfg, w, order_log, nrmse, frame_dt = _train_twin(cfg)

    artifacts = {}
    estimates = {}
    for lam in cfg["protocol"]["lambdas"]:
        seed = int(cfg["prediction"]["test_seeds"][state_key(lam)])
        test = _simulate(sys_cfg, schedule=ParamSchedule.constant(lam),
                         n_frames=cfg["prediction"]["test_frames"], seed=seed)
        s2 = TwinSession(session.rtopo, session.rparams, session.ptopo, session.pparams,
                         ReservoirState.zeros(session.rparams.n_nodes),
                         PhaseState.random(session.rtopo.n_links, seed=17),
                         phase_mode=FROZEN)
        for k in range(test.n_frames):
            s2.drive(test.frames[k])
        entry = {}
        try:
            pred = closed_loop_predict(s2, w, cfg["prediction"]["horizon"], frame_dt)
            entry["lambda_estimate"] = estimate_thomas_b(pred.trajectory, frame_dt)
            entry["attractor"] = classify_attractor(pred.trajectory).value
            key = state_key(lam)
            artifacts[f"prediction_{key}"] = out / f"prediction_{key}.csv"
            write_trajectory_csv(artifacts[f"prediction_{key}"], pred.trajectory)
        except DivergenceError as exc:
            entry["lambda_estimate"] = None
            entry["attractor"] = "diverged"
        estimates[state_key(lam)] = entry

    vals = [e["lambda_estimate"] for e in estimates.values()
            if e["lambda_estimate"] is not None]
    lams = sorted(cfg["protocol"]["lambdas"])
    summary = {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "experiment": "twin_baseline",
        "config": cfg,
        "one_step_nrmse": nrmse,
        "states": estimates,
        "estimate_spread": abs(vals[0] - vals[1]) if len(vals) == 2 else None,
        "both_intermediate": bool(len(vals) == 2 and
                                  all(lams[0] < v < lams[1] for v in vals)),
    }
    artifacts["summary"] = _write_summary(out, summary)
    return ExperimentResult(summary, artifacts)


_RUNNERS = {
    "detect_thomas": run_detect_thomas,
    "detect_mackey": run_detect_mackey,
    "detect_lorenz": run_detect_lorenz,
    "twin_train": run_twin_train,
    "twin_target": run_twin_target,
    "twin_baseline": run_twin_baseline,
}


def run_experiment(cfg: dict, out_dir: str | Path | None = None, **kwargs) -> ExperimentResult:
    cfg = resolve_config(cfg)
    runner = _RUNNERS[cfg["experiment"]]
    return runner(cfg, out_dir=out_dir, **kwargs)
