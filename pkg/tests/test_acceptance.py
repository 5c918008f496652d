"""Acceptance gates for the full pipeline at desk scale.

Every test prints one PASS line with its measured numbers so a run log
doubles as the acceptance report. Heavy experiments run once per session
via fixtures; expect a few minutes total. Run with:

    pytest tests/test_acceptance.py -v -s
"""

import json
import math
import time

import numpy as np
import pytest

from phaselink.dynsys import SystemSpec, ParamSchedule, simulate, thomas_deriv, rk4_step
from phaselink.experiments import (
    default_config,
    merge_config,
    resolve_config,
    run_detect_lorenz,
    run_detect_mackey,
    run_detect_thomas,
    run_experiment,
    run_twin_baseline,
    run_twin_target,
    run_twin_train,
)
from phaselink.learner import ridge_fit
from phaselink.phasenet import (
    PhaseState,
    forced_phase_step,
    global_order,
    isolated_phase_analytic,
    wrap_phase,
)
from phaselink.reservoir import (
    ReservoirParams,
    ReservoirState,
    build_reservoir,
    modulation_factors,
    reservoir_step,
    spectral_radius,
)
from phaselink.serialize import state_key


def report(name: str, detail: str):
    print(f"\nACCEPTANCE {name}: PASS ({detail})")


# ---------------------------------------------------------------------------
# heavy shared runs


@pytest.fixture(scope="module")
def fig2a(tmp_path_factory):
    out = tmp_path_factory.mktemp("fig2a")
    start = time.monotonic()
    result = run_detect_thomas(resolve_config({"experiment": "detect_thomas"}), out_dir=out)
    return result.summary, time.monotonic() - start


@pytest.fixture(scope="module")
def fig2b(tmp_path_factory):
    out = tmp_path_factory.mktemp("fig2b")
    result = run_detect_mackey(resolve_config({"experiment": "detect_mackey"}), out_dir=out)
    return result.summary


@pytest.fixture(scope="module")
def fig2c(tmp_path_factory):
    out = tmp_path_factory.mktemp("fig2c")
    result = run_detect_lorenz(resolve_config({"experiment": "detect_lorenz"}), out_dir=out)
    return result.summary


@pytest.fixture(scope="module")
def twin(tmp_path_factory):
    out = tmp_path_factory.mktemp("twin")
    train = run_twin_train(resolve_config({"experiment": "twin_train"}),
                           out_dir=out / "train")
    target = run_twin_target(resolve_config({"experiment": "twin_target"}),
                             out_dir=out / "target",
                             bundle_path=train.summary["bundle"])
    return train.summary, target.summary


@pytest.fixture(scope="module")
def baseline(tmp_path_factory):
    out = tmp_path_factory.mktemp("baseline")
    result = run_twin_baseline(resolve_config({"experiment": "twin_baseline"}), out_dir=out)
    return result.summary


# ---------------------------------------------------------------------------
# criterion 1: oscillation-death analytic oracle


def test_oscillation_death_oracle():
    start = time.monotonic()
    rng = np.random.default_rng(42)
    ts = np.linspace(0.0, 50.0, 501)
    dt = 1e-4
    worst = 0.0
    n_cases = 24
    for case in range(n_cases):
        if case % 2 == 0:  # oscillation-death side: |omega0| < |eps|
            eps = rng.uniform(0.3, 1.5)
            omega0 = rng.uniform(-0.9, 0.9) * eps
        else:              # winding side: |omega0| > |eps|
            omega0 = rng.uniform(0.3, 1.5) * (1.0 if rng.random() < 0.5 else -1.0)
            eps = rng.uniform(0.05, 0.95) * abs(omega0)
        psi0 = rng.uniform(-np.pi, np.pi)
        phi0 = rng.uniform(-np.pi, np.pi)
        ana = isolated_phase_analytic(omega0, eps, psi0, phi0, ts)
        # vectorized forward-Euler oracle on the fine grid
        steps_per_sample = int(round((ts[1] - ts[0]) / dt))
        phi = phi0
        num = np.empty_like(ts)
        num[0] = phi
        for i in range(1, len(ts)):
            for _ in range(steps_per_sample):
                phi += dt * (omega0 + eps * math.sin(psi0 - phi))
            num[i] = phi
        err = float(np.max(np.abs(wrap_phase(ana - num))))
        worst = max(worst, err)
        assert err <= 1e-3, f"case {case}: sup error {err}"
    elapsed = time.monotonic() - start
    assert elapsed < 5.0, f"oracle suite took {elapsed:.1f}s"
    report("oscillation-death oracle",
           f"{n_cases} seeded cases, worst sup error {worst:.2e}, {elapsed:.1f}s")


# criterion 2: uniform forcing leaves R frozen


def test_uniform_forcing_invariance():
    state = PhaseState.random(1782, seed=3)
    r0 = global_order(state).R
    omega = 0.0123
    worst = 0.0
    for _ in range(10000):
        state = forced_phase_step(state, omega, dt=1.0)
        worst = max(worst, abs(global_order(state).R - r0))
    assert worst <= 1e-9
    report("uniform-forcing invariance",
           f"10^4 forced steps, max |R - R0| = {worst:.2e}")


# criterion 3: Thomas regime switch (Fig 2A, desk scale)


def test_fig2a_thomas_detection(fig2a):
    summary, elapsed = fig2a
    stats = summary["plateaus"]
    assert stats["separation_ratio"] > 5.0, stats
    assert stats["pre_mean"] >= 0.9, stats  # chaotic-state plateau
    lat_cycles = summary["detection_latency_cycles"]
    assert lat_cycles is not None and lat_cycles <= 10.0
    assert elapsed < 120.0
    report("fig2A Thomas detection",
           f"plateaus {stats['pre_mean']:.4f}/{stats['post_mean']:.4f}, "
           f"separation {stats['separation_ratio']:.1f}x pooled std, "
           f"latency {lat_cycles:.1f} cycles, runtime {elapsed:.0f}s")


# criterion 4: Lorenz switch and collapse (Fig 2C)


def test_fig2c_lorenz_detection(fig2c):
    lat = fig2c["switch_latency_cycles"]
    assert lat is not None and lat <= 25.0
    dist = fig2c["collapse_distance_cycles"]
    assert dist is not None and dist <= 5.0
    report("fig2C Lorenz detection",
           f"rho-switch latency {lat:.1f} cycles (gate 25), "
           f"collapse distance {dist:.1f} cycles (gate 5)")


# criterion 5: Mackey-Glass sinusoid tracking (Fig 2B)


def test_fig2b_mackey_tracking(fig2b):
    corr = fig2b["abs_correlation"]
    assert corr >= 0.6
    report("fig2B Mackey-Glass tracking",
           f"|corr(smoothed R, lambda)| = {corr:.3f} (gate 0.6)")


# criterion 6: state targeting and recall (Fig 3C)


def test_fig3a_three_r_levels(twin):
    # the 0.29 input admits two coexisting periodic orbits, so training shows
    # three distinct equilibrium values of R
    train_summary, _ = twin
    means = sorted(lv["r_mean"] for lv in train_summary["r_levels"])
    clusters = []
    for m in means:
        if not clusters or m - clusters[-1] > 0.004:
            clusters.append(m)
    assert len(clusters) >= 3, means
    report("fig3A training plateaus",
           f"R levels {[round(c, 4) for c in clusters]} "
           "(chaotic + two coexisting periodic orbits)")


def test_fig3c_state_recall(twin):
    train_summary, target_summary = twin
    assert train_summary["one_step_nrmse"] <= 0.05  # spec sanity floor
    expect = {"0.18": "chaotic", "0.29": "periodic"}
    details = []
    for key, want in expect.items():
        entry = target_summary["states"][key]
        assert entry["attractor"] == want, entry
        assert entry["lambda_error"] <= 0.03, entry
        details.append(f"{key}: {entry['attractor']} "
                       f"b^={entry['lambda_estimate']:.3f}")
    report("fig3C state recall", "; ".join(details) + " over 5000-frame closed loops")


# criterion 7: standard-RC baseline merges the states (Fig 3D)


def test_fig3d_baseline_intermediate(baseline):
    spread = baseline["estimate_spread"]
    assert spread is not None and spread < 0.01
    assert baseline["both_intermediate"] is True
    vals = [baseline["states"][k]["lambda_estimate"] for k in ("0.18", "0.29")]
    report("fig3D baseline",
           f"estimates {vals[0]:.4f}/{vals[1]:.4f}, spread {spread:.4f} "
           "(both strictly inside (0.18, 0.29))")


# criterion 8: stepping the frozen mean phase reaches unseen states (Fig 3B)


def test_fig3b_offset_extrapolation(twin):
    _, target_summary = twin
    sweep = target_summary["offset_sweep"]
    assert sweep is not None
    assert len(sweep["rows"]) >= 5
    assert sweep["n_distinct"] >= 3
    ests = [r["lambda_estimate"] for r in sweep["rows"] if r["lambda_estimate"] is not None]
    report("fig3B mean-phase stepping",
           f"{len(sweep['rows'])} frozen offsets -> {sweep['n_distinct']} distinct "
           f"lambda estimates (gap > 0.005): {[round(e, 3) for e in ests]}; "
           f"monotone fraction {sweep['monotone_fraction']:.2f} (reported, not gated)")


# criterion 9: numerics suite


def test_numerics_ridge_residual():
    rng = np.random.default_rng(5)
    s = np.tanh(rng.normal(size=(300, 5000)) * 0.7)
    u = rng.normal(size=(3, 5000))
    beta = 1e-6
    w = ridge_fit(s, u, beta)
    gram = s @ s.T + beta * np.eye(300)
    resid = np.linalg.norm(gram @ w.w_out.T - s @ u.T) / np.linalg.norm(s @ u.T)
    assert resid <= 1e-8
    report("numerics: ridge residual", f"relative normal-equation residual {resid:.2e}")


def test_numerics_spectral_radius_oracle():
    rng = np.random.default_rng(6)
    a = rng.uniform(-1, 1, (300, 300)) * (rng.random((300, 300)) < 0.02)
    import scipy.sparse as sp
    est = spectral_radius(sp.csr_matrix(a))
    dense = float(np.max(np.abs(np.linalg.eigvals(np.abs(a)))))
    assert abs(est - dense) <= 1e-6
    report("numerics: spectral radius", f"|power iteration - dense eig| = {abs(est - dense):.2e}")


def test_numerics_rk4_order():
    state = np.array([1.0, 1.0, 1.0])

    def integrate(dt, t_end=2.0):
        s = state.copy()
        for _ in range(int(round(t_end / dt))):
            s = rk4_step(lambda q: thomas_deriv(q, 0.18), s, dt)
        return s

    ref = integrate(0.2 / 64)
    ratio = (np.linalg.norm(integrate(0.2) - ref)
             / np.linalg.norm(integrate(0.1) - ref))
    order = math.log2(ratio)
    assert 14.0 <= ratio <= 18.0
    assert order >= 3.8
    report("numerics: RK4 order", f"halving ratio {ratio:.1f}, measured order {order:.2f}")


def test_numerics_confinement_and_modulation_bounds():
    params = ReservoirParams(n_nodes=60, node_density=0.08, alpha=0.3,
                             input_scale=1.5, mod_depth=0.7)
    rtopo, _ = build_reservoir(params, input_dim=3, seed=12)
    rng = np.random.default_rng(7)
    state = ReservoirState(rng.uniform(-0.99, 0.99, 60))
    n_steps = 100_000
    lo, hi = 0.0, 0.0
    for k in range(n_steps):
        phase = PhaseState(rng.uniform(-np.pi, np.pi, rtopo.n_links))
        factors = modulation_factors(phase.phi, params.mod_depth)
        assert factors.min() >= 1.0 - params.mod_depth - 1e-12
        assert factors.max() <= 1.0 + 1e-12
        state = reservoir_step(state, rng.uniform(-4, 4, 3), phase, rtopo, params)
        lo = min(lo, state.n.min())
        hi = max(hi, state.n.max())
        assert -1.0 < state.n.min() and state.n.max() < 1.0
    report("numerics: confinement + modulation bounds",
           f"{n_steps} randomized steps, state range [{lo:.4f}, {hi:.4f}], "
           f"factors within [1-m, 1]")


# criterion 10: determinism


def test_determinism_experiment_artifacts(tmp_path):
    cfg = {
        "experiment": "detect_thomas",
        "system": {"n_frames": 2000, "warmup_discard": 500,
                   "schedule": {"kind": "step", "base_value": 0.18,
                                "switch_frames": [[1000, 0.29]]}},
        "reservoir": {"n_nodes": 80, "node_density": 0.06},
        "phase": {"phase_density": 0.1},
        "detector": {"window": 100, "k_sigma": 4.0, "lead_frames": 400,
                     "plateau_window": 500, "plateau_gap": 50},
    }
    r1 = run_experiment(cfg, out_dir=tmp_path / "a")
    r2 = run_experiment(cfg, out_dir=tmp_path / "b")
    for name in sorted(r1.artifacts):
        if r1.artifacts[name].is_dir():
            continue
        assert r1.artifacts[name].read_bytes() == r2.artifacts[name].read_bytes(), name
    report("determinism: experiment artifacts",
           f"{len(r1.artifacts)} artifacts bit-identical across two runs")


def test_determinism_steerd_replay(tiny_bundle):
    from phaselink.serialize import load_model_bundle
    from phaselink.steerd import SessionConfig, replay_session

    bundle = load_model_bundle(tiny_bundle)
    config = SessionConfig(fps=0.0, warmup="equilibrate", replay_dir=None)
    script = [
        {"frame": 15, "command": {"kind": "set_mode", "mode": "forced"}},
        {"frame": 15, "command": {"kind": "set_omega", "value": 0.02}},
        {"frame": 90, "command": {"kind": "freeze"}},
        {"frame": 120, "command": {"kind": "switch_input", "lambda": 0.29}},
    ]
    a = replay_session(bundle, config, script, 200)
    b = replay_session(bundle, config, script, 200)
    assert json.dumps(a) == json.dumps(b)
    report("determinism: steerd replay",
           "200-frame commanded session reproduces byte-identically")
