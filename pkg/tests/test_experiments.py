import json
from pathlib import Path

import numpy as np
import pytest

from phaselink.cli import main as cli_main
from phaselink.errors import ConfigError
from phaselink.experiments import (
    default_config,
    make_alternating_schedule,
    merge_config,
    resolve_config,
    run_detect_thomas,
    run_experiment,
)

TINY_DETECT = {
    "experiment": "detect_thomas",
    "system": {"n_frames": 2600, "warmup_discard": 500,
               "schedule": {"kind": "step", "base_value": 0.18,
                            "switch_frames": [[1300, 0.29]]}},
    "reservoir": {"n_nodes": 80, "node_density": 0.06},
    "phase": {"phase_density": 0.1},
    "detector": {"window": 100, "k_sigma": 4.0, "lead_frames": 500,
                 "plateau_window": 600, "plateau_gap": 50},
}


class TestConfig:
    def test_defaults_exist_for_all_kinds(self):
        for kind in ("detect_thomas", "detect_mackey", "detect_lorenz",
                     "twin_train", "twin_target", "twin_baseline"):
            cfg = default_config(kind)
            assert cfg["experiment"] == kind

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            default_config("nope")

    def test_merge_is_deep_and_nondestructive(self):
        base = {"a": {"b": 1, "c": 2}, "d": 3}
        override = {"a": {"b": 10}}
        merged = merge_config(base, override)
        assert merged == {"a": {"b": 10, "c": 2}, "d": 3}
        assert base["a"]["b"] == 1

    def test_resolve_requires_experiment(self):
        with pytest.raises(ConfigError):
            resolve_config({})


class TestAlternatingSchedule:
    def test_dwells_within_bounds_and_increasing(self):
        protocol = {"lambdas": [0.18, 0.29], "dwell_min": 100, "dwell_max": 200,
                    "total_frames": 3000, "schedule_seed": 5}
        sched = make_alternating_schedule(protocol, frame_dt=0.5)
        times = [t for t, _ in sched.switches]
        assert times == sorted(times)
        dwells = np.diff([0.0] + times) / 0.5
        assert np.all(dwells >= 100)
        assert np.all(dwells <= 200)
        values = [v for _, v in sched.switches]
        assert all(a != b for a, b in zip(values, values[1:]))

    def test_seeded_determinism(self):
        protocol = {"lambdas": [0.18, 0.29], "dwell_min": 100, "dwell_max": 200,
                    "total_frames": 3000, "schedule_seed": 5}
        a = make_alternating_schedule(protocol, 0.5)
        b = make_alternating_schedule(protocol, 0.5)
        assert a == b


class TestDetectRunner:
    def test_artifacts_and_summary(self, tmp_path):
        result = run_experiment(TINY_DETECT, out_dir=tmp_path / "run")
        summary = result.summary
        assert summary["schema_version"] == 1
        assert summary["experiment"] == "detect_thomas"
        assert "plateaus" in summary
        for name in ("trajectory", "order", "change_report", "summary"):
            assert result.artifacts[name].exists(), name
        report = json.loads(result.artifacts["change_report"].read_text())
        assert "change_points" in report
        saved = json.loads(result.artifacts["summary"].read_text())
        assert saved["plateaus"] == summary["plateaus"]

    def test_artifacts_bit_identical_across_runs(self, tmp_path):
        r1 = run_experiment(TINY_DETECT, out_dir=tmp_path / "a")
        r2 = run_experiment(TINY_DETECT, out_dir=tmp_path / "b")
        for name in ("trajectory", "order", "change_report", "summary"):
            b1 = r1.artifacts[name].read_bytes()
            b2 = r2.artifacts[name].read_bytes()
            assert b1 == b2, f"{name} differs between identical runs"

    def test_seed_changes_artifacts(self, tmp_path):
        changed = merge_config(TINY_DETECT, {"system": {"seed": 99}})
        r1 = run_experiment(TINY_DETECT, out_dir=tmp_path / "a")
        r2 = run_experiment(changed, out_dir=tmp_path / "b")
        assert (r1.artifacts["trajectory"].read_bytes()
                != r2.artifacts["trajectory"].read_bytes())


class TestTinyTwin:
    def test_bundle_written_and_loadable(self, tiny_bundle):
        from phaselink.serialize import load_model_bundle
        bundle = load_model_bundle(tiny_bundle)
        assert bundle.w_out.shape[0] == 3
        assert set(bundle.state_trajectories) == {"0.18", "0.29"}

    def test_train_summary_quality_floor(self, tiny_bundle):
        summary = json.loads((tiny_bundle.parent / "summary.json").read_text())
        assert summary["one_step_nrmse"] <= 0.05
        assert len(summary["r_plateaus"]) == 2


class TestCLI:
    def test_simulate_writes_csv(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"experiment": "detect_thomas",
                                   "system": {"n_frames": 300, "warmup_discard": 100}}))
        rc = cli_main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "sim")])
        assert rc == 0
        out = capsys.readouterr().out.strip()
        assert Path(out).exists()

    def test_detect_runs_tiny(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(TINY_DETECT))
        rc = cli_main(["detect", "--config", str(cfg), "--out", str(tmp_path / "det")])
        assert rc == 0
        summary_path = Path(capsys.readouterr().out.strip())
        assert summary_path.name == "summary.json"

    def test_config_error_exit_code(self, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text("{broken")
        rc = cli_main(["detect", "--config", str(cfg)])
        assert rc == 2

    def test_subcommand_experiment_mismatch(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"experiment": "twin_train"}))
        rc = cli_main(["baseline", "--config", str(cfg)])
        assert rc == 2
