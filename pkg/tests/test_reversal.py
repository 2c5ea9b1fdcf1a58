import numpy as np
import pytest

from lpl.datasets import make_blob_images
from lpl.errors import ConfigError, ShapeError
from lpl.fileio import read_pgm
from lpl.nn import LayerSpec, MlpNetwork, init_network, mlp_specs, network_forward
from lpl.reversal import (
    ReversalOptions,
    curvature_check,
    input_jacobian,
    random_reconstruction_experiment,
    reverse,
    reverse_batch,
)


def linear(w, b=None):
    w = np.asarray(w, dtype=np.float64)
    return MlpNetwork((LayerSpec(*w.shape),), (w,), (np.zeros(w.shape[1]) if b is None else b,))


def tanh_generator(seed, d=8, hidden=256, m=64):
    return init_network(mlp_specs([d, hidden, m], "tanh", "identity"), seed)


class TestReverse:
    def test_identity_generator_recovers_target(self):
        x = np.array([0.3, -0.7])
        res = reverse(linear(np.eye(2)), x, ReversalOptions(max_steps=1000, tolerance=0.0))
        np.testing.assert_allclose(res.z, x, atol=1e-6)
        assert res.final_loss < 1e-10

    def test_invertible_linear_generator_matches_solve(self):
        w = np.array([[1.0, 0.4], [-0.3, 0.8]])
        x = np.array([0.2, -0.5])
        res = reverse(linear(w), x, ReversalOptions(max_steps=2000, tolerance=0.0))
        # row convention: x = z @ w
        np.testing.assert_allclose(res.z, np.linalg.solve(w.T, x), atol=1e-6)

    def test_perfect_preimage_found(self):
        g = tanh_generator(0)
        z_star = np.random.default_rng([0, 7]).normal(size=8)
        res = reverse(g, g(z_star), seed=0)
        assert res.final_loss < 1e-6 and res.steps_used <= 400

    def test_loss_does_not_increase_for_tanh_net(self):
        g = init_network(mlp_specs([4, 16, 6], "tanh", "tanh"), 2)
        x = np.random.default_rng(1).uniform(-0.5, 0.5, size=6)
        res = reverse(g, x, ReversalOptions(step_size=0.01, tolerance=0.0, max_steps=200))
        assert np.all(np.diff(res.loss_trace) <= 1e-15)
        assert res.final_loss <= res.loss_trace[0]

    def test_converged_flag_and_early_stop(self):
        res = reverse(linear(np.eye(2)), [0.1, 0.1], ReversalOptions(max_steps=4000))
        assert res.converged and res.steps_used < 4000

    def test_tolerance_zero_runs_to_max_steps(self):
        res = reverse(linear(np.eye(2)), [0.1, 0.1], ReversalOptions(max_steps=50, tolerance=0.0))
        assert not res.converged and res.steps_used == 50 and len(res.loss_trace) == 51

    def test_l2_weight_shrinks_solution(self):
        opts = ReversalOptions(max_steps=2000, tolerance=0.0, l2_weight=1.0)
        res = reverse(linear(np.eye(2)), [0.4, -0.4], opts)
        np.testing.assert_allclose(res.z, [0.2, -0.2], atol=1e-6)

    def test_rejects_batches(self):
        with pytest.raises(ShapeError):
            reverse(linear(np.eye(2)), np.zeros((2, 2)))

    @pytest.mark.parametrize("kw", [{"step_size": 0}, {"max_steps": 0}, {"init_stddev": -1},
                                    {"window": 0}, {"row_seeding": "hash"}])
    def test_bad_options(self, kw):
        with pytest.raises(ConfigError):
            ReversalOptions(**kw)


class TestReverseBatch:
    def test_batch_of_one_equals_reverse(self):
        g = tanh_generator(1)
        x = g(np.ones(8) * 0.1)
        single = reverse(g, x, seed=3)
        batch = reverse_batch(g, x, seed=3)
        np.testing.assert_array_equal(batch.codes[0], single.z)
        assert batch.reversal_losses[0] == single.final_loss

    def test_1024_rows(self):
        g = init_network(mlp_specs([4, 16, 6], "relu", "tanh"), 0)
        x = np.random.default_rng(0).uniform(-1, 1, size=(1024, 6))
        codes = reverse_batch(g, x, ReversalOptions(max_steps=20))
        assert codes.codes.shape == (1024, 4)
        assert codes.reversal_losses.shape == (1024,) and np.all(np.isfinite(codes.reversal_losses))

    def test_content_seeding_is_permutation_equivariant(self):
        g = init_network(mlp_specs([3, 16, 5], "tanh", "tanh"), 4)
        x = np.random.default_rng(2).uniform(-0.8, 0.8, size=(30, 5))
        perm = np.random.default_rng(3).permutation(30)
        opts = ReversalOptions(row_seeding="content", max_steps=100)
        a = reverse_batch(g, x, opts, seed=1)
        b = reverse_batch(g, x[perm], opts, seed=1)
        # BLAS may block a permuted batch differently, so allow last-bit noise
        np.testing.assert_allclose(b.codes, a.codes[perm], rtol=0, atol=1e-12)

    def test_empty_batch_rejected(self):
        with pytest.raises(ConfigError):
            reverse_batch(linear(np.eye(2)), np.zeros((0, 2)))

    def test_non_finite_rows_are_flagged(self):
        x = np.array([[0.1, 0.2], [np.nan, 0.0]])
        codes = reverse_batch(linear(np.eye(2)), x, ReversalOptions(max_steps=10))
        assert list(codes.failed) == [False, True]
        assert np.all(np.isfinite(codes.codes))


class TestCurvature:
    def test_linear_generator_gauss_newton(self):
        w = np.random.default_rng(0).normal(size=(3, 5))
        rep = curvature_check(linear(w), np.zeros(3))
        np.testing.assert_array_equal(rep.gauss_newton, w @ w.T)

    def test_input_jacobian_shape(self):
        j = input_jacobian(tanh_generator(0, d=3, hidden=6, m=4), np.zeros(3))
        assert j.shape == (4, 3)

    @pytest.mark.parametrize("seed", range(5))
    def test_tanh_net_hessian_is_gauss_newton(self, seed):
        g = init_network(mlp_specs([4, 12, 6], "tanh", "tanh"), seed)
        z = np.random.default_rng(seed).normal(size=4)
        rep = curvature_check(g, z)
        assert rep.max_abs_deviation < 1e-4
        assert rep.min_eigenvalue >= -1e-6

    def test_l2_weight_gives_strong_convexity(self):
        g = init_network(mlp_specs([4, 12, 6], "tanh", "tanh"), 9)
        rep = curvature_check(g, np.zeros(4) + 0.3, l2_weight=0.5)
        assert rep.min_eigenvalue >= 0.5 - 1e-6

    def test_relu_kink_is_avoided(self):
        g = init_network(mlp_specs([2, 8, 3], "relu", "identity"), 1)
        rep = curvature_check(g, np.zeros(2))
        assert not np.array_equal(rep.z_star, np.zeros(2))
        _, trace = network_forward(g, rep.z_star)
        assert all(np.all(p != 0.0) for p in trace.pre)

    def test_relu_net_away_from_kinks(self):
        g = init_network(mlp_specs([2, 8, 3], "relu", "identity"), 1)
        rep = curvature_check(g, np.array([0.7, -0.4]))
        assert rep.max_abs_deviation < 1e-4


class TestRandomReconstruction:
    def test_grids_and_decreasing_loss(self, tmp_path):
        ds = make_blob_images(16, seed=0)
        run = random_reconstruction_experiment(mlp_specs([100, 256, 64], "relu", "tanh"), ds,
                                               (5, 20, 400), seed=0, out_dir=tmp_path)
        assert sorted(run.snapshots) == [5, 20, 400]
        assert run.mean_loss[400] < run.mean_loss[5]
        names = sorted(p.name for p in run.grid_paths)
        assert names == ["originals.pgm", "recon_step0005.pgm", "recon_step0020.pgm",
                         "recon_step0400.pgm"]
        assert read_pgm(tmp_path / "recon_step0400.pgm").shape == (2 * 8 + 1, 8 * 8 + 7)
        assert (tmp_path / "loss_curve.csv").read_text().count("\n") == 402

    def test_empty_dataset_rejected(self):
        with pytest.raises(ConfigError):
            random_reconstruction_experiment(mlp_specs([2, 4]), np.zeros((0, 4)), (5,))

    def test_snapshots_must_ascend(self):
        with pytest.raises(ConfigError):
            random_reconstruction_experiment(mlp_specs([2, 4]), np.zeros((1, 4)), (20, 5))
