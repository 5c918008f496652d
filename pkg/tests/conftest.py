import json

import pytest

from phaselink.experiments import resolve_config, run_twin_train

TINY_TWIN = {
    "experiment": "twin_train",
    "system": {"seed": 2},
    "protocol": {"dwell_min": 150, "dwell_max": 300, "total_frames": 3001,
                 "schedule_seed": 123},
    "reservoir": {"n_nodes": 60, "node_density": 0.1, "seed": 7},
    "phase": {"phase_density": 0.1},
    "train": {"warmup_steps": 200, "train_steps": 2800, "predict_warmup_steps": 400},
    "prediction": {"test_frames": 1500, "test_seeds": {"0.18": 31, "0.29": 37}},
    "targeting": {"sweep_omega": 0.01, "sweep_steps": 660, "r_equilibrium_tol": 0.05,
                  "r_window": 100},
}


@pytest.fixture(scope="session")
def tiny_bundle(tmp_path_factory):
    """A small trained twin bundle shared by steerd/experiment tests."""
    out = tmp_path_factory.mktemp("tiny_twin")
    result = run_twin_train(resolve_config(TINY_TWIN), out_dir=out)
    return result.artifacts["bundle"]
