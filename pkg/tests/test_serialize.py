import numpy as np
import pytest
import scipy.sparse as sp

from phaselink.dynsys import ParamSchedule, SystemSpec, Trajectory, simulate
from phaselink.errors import BundleError, ConfigError
from phaselink.learner import TargetingConfig, TrainConfig
from phaselink.phasenet import PhaseParams
from phaselink.reservoir import ReservoirParams, build_reservoir
from phaselink.serialize import (
    load_model_bundle,
    read_dense,
    read_order_csv,
    read_sparse_triplet,
    read_trajectory_csv,
    save_model_bundle,
    write_dense,
    write_order_csv,
    write_sparse_triplet,
    write_trajectory_csv,
)


class TestTrajectoryCSV:
    def test_roundtrip_bit_exact(self, tmp_path):
        traj = simulate(SystemSpec.thomas(), ParamSchedule.constant(0.18), 50,
                        dt=0.05, seed=1)
        path = tmp_path / "traj.csv"
        write_trajectory_csv(path, traj)
        again = read_trajectory_csv(path)
        np.testing.assert_array_equal(again.frames, traj.frames)
        np.testing.assert_array_equal(again.lam, traj.lam)
        assert again.dt == pytest.approx(traj.dt, rel=1e-12)

    def test_header_shape(self, tmp_path):
        traj = Trajectory(0.5, np.zeros((3, 1)), np.zeros(3))
        path = tmp_path / "t.csv"
        write_trajectory_csv(path, traj)
        header = path.read_text().splitlines()[0]
        assert header == "t,lambda,x0"

    def test_reject_garbage(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("nope\n1,2,3\n")
        with pytest.raises(ConfigError):
            read_trajectory_csv(path)


class TestOrderCSV:
    def test_roundtrip(self, tmp_path):
        log = np.random.default_rng(0).normal(size=(20, 3))
        path = tmp_path / "order.csv"
        write_order_csv(path, log)
        assert path.read_text().splitlines()[0] == "t,R,mean_phase"
        np.testing.assert_array_equal(read_order_csv(path), log)


class TestSparseTriplet:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        dense = rng.normal(size=(10, 14)) * (rng.random((10, 14)) < 0.2)
        mat = sp.csr_matrix(dense)
        path = tmp_path / "m.triplet"
        write_sparse_triplet(path, mat)
        again = read_sparse_triplet(path)
        assert again.shape == mat.shape
        np.testing.assert_array_equal(again.toarray(), dense)

    def test_header_mismatch_rejected(self, tmp_path):
        path = tmp_path / "m.triplet"
        path.write_text("2 2 3\n0 0 1.0\n")
        with pytest.raises(ConfigError):
            read_sparse_triplet(path)


class TestDenseBinary:
    def test_roundtrip_matrix(self, tmp_path):
        arr = np.random.default_rng(2).normal(size=(7, 3))
        path = tmp_path / "a.bin"
        write_dense(path, arr)
        np.testing.assert_array_equal(read_dense(path), arr)

    def test_roundtrip_vector(self, tmp_path):
        arr = np.random.default_rng(3).normal(size=11)
        path = tmp_path / "v.bin"
        write_dense(path, arr)
        np.testing.assert_array_equal(read_dense(path), arr)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(ConfigError):
            read_dense(path)


def make_bundle(tmp_path):
    rparams = ReservoirParams(n_nodes=30, node_density=0.1)
    rtopo, ptopo = build_reservoir(rparams, input_dim=3, seed=3, phase_density=0.2)
    pparams = PhaseParams.build(rtopo.n_links, omega0_value=0.02, lambda_density=0.5,
                                eps1=0.0, eps2=0.1, seed=4)
    w_out = np.random.default_rng(5).normal(size=(3, 30))
    traj = simulate(SystemSpec.thomas(), ParamSchedule.constant(0.29), 60, dt=0.05, seed=6)
    return save_model_bundle(
        tmp_path / "bundle", rtopo=rtopo, rparams=rparams, ptopo=ptopo,
        pparams=pparams, w_out=w_out, system=SystemSpec.thomas(),
        train_cfg=TrainConfig(warmup_steps=10, train_steps=20, predict_warmup_steps=10),
        targeting_cfg=TargetingConfig(sweep_omega=0.01, sweep_steps=700),
        state_trajectories={0.29: traj}, seeds={"reservoir": 3, "phase_params": 4})


class TestBundle:
    def test_roundtrip(self, tmp_path):
        out = make_bundle(tmp_path)
        bundle = load_model_bundle(out)
        assert bundle.rparams.n_nodes == 30
        assert bundle.w_out.shape == (3, 30)
        assert bundle.state_lambdas == [0.29]
        assert bundle.rtopo.n_links == bundle.ptopo.n_links
        assert bundle.pparams.omega0.shape[0] == bundle.rtopo.n_links
        # normalized rows survived the rebuild
        sums = np.asarray(bundle.ptopo.incidence_norm.sum(axis=1)).ravel()
        np.testing.assert_allclose(sums, np.ones(bundle.rtopo.n_links))

    def test_adjacency_bit_exact(self, tmp_path):
        out = make_bundle(tmp_path)
        bundle = load_model_bundle(out)
        original = read_sparse_triplet(out / "node_adj.triplet")
        np.testing.assert_array_equal(bundle.rtopo.node_adj.toarray(), original.toarray())

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(BundleError):
            load_model_bundle(tmp_path / "nothing")

    def test_corrupt_manifest(self, tmp_path):
        out = make_bundle(tmp_path)
        (out / "manifest.json").write_text("{not json")
        with pytest.raises(BundleError):
            load_model_bundle(out)

    def test_wrong_version(self, tmp_path):
        import json
        out = make_bundle(tmp_path)
        manifest = json.loads((out / "manifest.json").read_text())
        manifest["format_version"] = 99
        (out / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(BundleError):
            load_model_bundle(out)

    def test_missing_matrix_file(self, tmp_path):
        out = make_bundle(tmp_path)
        (out / "w_out.bin").unlink()
        with pytest.raises(BundleError):
            load_model_bundle(out)
