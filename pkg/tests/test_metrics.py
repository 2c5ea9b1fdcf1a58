import numpy as np
import pytest

from lpl.errors import ConfigError, DivergenceError, InsufficientDataError
from lpl.fileio import read_csv
from lpl.metrics import (
    LinearGaussianModel,
    cluster_ratio,
    diag_gaussian_logpdf,
    diag_gaussian_sampler,
    gaussian_kl,
    kl_decomposition_check,
    kl_diag_gaussian,
    kl_mc_estimate,
    pag_from_codes,
    pag_score,
    singular_values,
)


class TestSingularValues:
    def test_identity_rows(self):
        # centred rows (+-1/2, -+1/2), scaled by 1/sqrt(n-1) = 1
        nu = singular_values(np.eye(2))
        np.testing.assert_allclose(nu, [1.0, 0.0], atol=1e-15)
        ref = np.linalg.svd(np.eye(2) - 0.5, compute_uv=False)
        np.testing.assert_allclose(nu, ref, atol=1e-15)

    def test_matches_lapack(self):
        z = np.random.default_rng(0).normal(size=(50, 6)) @ np.diag([3, 2, 1, 0.5, 0.1, 0.01])
        ref = np.linalg.svd((z - z.mean(0)) / np.sqrt(49), compute_uv=False)
        np.testing.assert_allclose(singular_values(z), ref, rtol=1e-12)

    def test_isotropic_codes(self):
        z = np.random.default_rng(1).normal(size=(100_000, 5))
        nu = singular_values(z)
        assert np.all((nu >= 0.98) & (nu <= 1.02))

    def test_duplicated_rows(self):
        z = np.random.default_rng(2).normal(size=(200, 3))
        a, b = singular_values(z), singular_values(np.vstack([z, z]))
        assert np.max(np.abs(a - b)) < 5.0 / 200

    def test_too_few_rows(self):
        with pytest.raises(InsufficientDataError):
            singular_values(np.zeros((3, 4)))

    def test_raw_normalization_skips_centring(self):
        z = np.random.default_rng(3).normal(size=(40, 3)) + 5.0
        np.testing.assert_allclose(singular_values(z, "raw"), np.linalg.svd(z, compute_uv=False),
                                   rtol=1e-12)
        with pytest.raises(ConfigError):
            singular_values(z, "scaled")


class TestPagScore:
    def test_matching_prior_is_zero(self):
        assert pag_score([1.5, 1.5, 1.5], 1.5) == 0.0

    def test_worked_case(self):
        hand = 0.5 * ((2 - np.log(2) - 1) + (0.5 - np.log(0.5) - 1))
        assert hand == pytest.approx(0.25, abs=1e-15)
        assert pag_score(np.sqrt([2.0, 0.5]), 1.0) == pytest.approx(0.25, abs=1e-15)

    def test_monotone_divergence(self):
        vals = [pag_score(np.sqrt([c, 1 / c]), 1.0) for c in (1.5, 3, 10, 100, 1e6)]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_agrees_with_diag_kl(self):
        rng = np.random.default_rng(4)
        nu = rng.uniform(0.1, 3, size=5)
        assert pag_score(nu, 1.3) == pytest.approx(
            kl_diag_gaussian(np.zeros(5), nu ** 2, np.zeros(5), np.full(5, 1.69)), rel=1e-12)

    def test_zero_singular_value(self):
        with pytest.raises(DivergenceError):
            pag_score([1.0, 0.0], 1.0)

    def test_bad_sigma(self):
        with pytest.raises(ConfigError):
            pag_score([1.0], 0.0)


class TestPagFromCodes:
    def test_prior_samples_score_near_zero(self):
        z = np.random.default_rng(5).normal(0, 2.0, size=(100_000, 4))
        assert pag_from_codes(z, 2.0).pag < 0.05 * 4

    def test_stretched_dimension_scores_higher(self):
        z = np.random.default_rng(6).normal(size=(5000, 3))
        stretched = z * [3.0, 1.0, 1.0]
        assert pag_from_codes(stretched).pag > pag_from_codes(z).pag

    def test_csv_outputs(self, tmp_path):
        z = np.random.default_rng(7).normal(size=(30, 2))
        rep = pag_from_codes(z, 1.0, tmp_path / "s.csv", tmp_path / "p.csv")
        head, rows = read_csv(tmp_path / "s.csv")
        assert head == ["index", "singular_value"] and len(rows) == 2
        head, rows = read_csv(tmp_path / "p.csv")
        assert head == ["n", "d", "sigma", "pag"]
        assert float(rows[0][3]) == rep.pag

    def test_insufficient(self):
        with pytest.raises(InsufficientDataError):
            pag_from_codes(np.zeros((2, 3)))


class TestKL:
    def test_identical(self):
        assert kl_diag_gaussian([0.0], [1.0], [0.0], [1.0]) == 0.0

    def test_variance_ratio(self):
        assert kl_diag_gaussian([0], [2], [0], [1]) == pytest.approx(0.15343, abs=1e-5)

    def test_mean_shift(self):
        assert kl_diag_gaussian([1.0], [1.0], [0.0], [1.0]) == pytest.approx(0.5)

    def test_full_covariance_agrees_with_diag(self):
        mu0, mu1 = np.array([0.2, -1.0]), np.array([0.0, 0.5])
        v0, v1 = np.array([0.5, 2.0]), np.array([1.5, 0.7])
        assert gaussian_kl(mu0, np.diag(v0), mu1, np.diag(v1)) == pytest.approx(
            kl_diag_gaussian(mu0, v0, mu1, v1), rel=1e-12)

    def test_mc_identical_within_three_stderr(self):
        p = diag_gaussian_logpdf([0.0, 0.0], [1.0, 2.0])
        est = kl_mc_estimate(diag_gaussian_sampler([0.0, 0.0], [1.0, 2.0]), p, p, 10_000, seed=1)
        assert abs(est.value) <= 3 * est.stderr + 1e-15

    def test_mc_matches_pag_example(self):
        var = np.array([2.0, 0.5])
        est = kl_mc_estimate(diag_gaussian_sampler(np.zeros(2), var), diag_gaussian_logpdf(np.zeros(2), var),
                             diag_gaussian_logpdf(np.zeros(2), np.ones(2)), 1_000_000, seed=3)
        assert abs(est.value - 0.25) < 0.02 * 0.25

    def test_mc_needs_samples(self):
        with pytest.raises(ConfigError):
            kl_mc_estimate(None, None, None, 0)


class TestDecomposition:
    def test_same_model_all_zero(self):
        p = LinearGaussianModel.random(np.random.default_rng(0), 2, 3)
        r = kl_decomposition_check(p, p)
        assert abs(r.lhs) < 1e-12 and r.rhs_conditional_term == 0.0 and r.gap < 1e-12

    def test_shared_conditional_leaves_prior_term(self):
        p = LinearGaussianModel.random(np.random.default_rng(1), 2, 3)
        q = LinearGaussianModel(p.prior_mean + 0.3, p.prior_cov * 2.0, p.weight, p.offset, p.noise_cov)
        r = kl_decomposition_check(p, q)
        assert r.rhs_conditional_term == 0.0
        assert r.lhs == pytest.approx(r.rhs_prior_term, abs=1e-12)

    def test_generic_pair(self):
        rng = np.random.default_rng(2)
        p, q = LinearGaussianModel.random(rng, 2, 2), LinearGaussianModel.random(rng, 2, 2)
        assert kl_decomposition_check(p, q).gap < 1e-10

    def test_only_linear_gaussian(self):
        with pytest.raises(ConfigError):
            kl_decomposition_check(object(), object())


class TestClusterRatio:
    def test_hand_example(self):
        pts = [[0, 0], [0, 1], [10, 0], [10, 1]]
        assert cluster_ratio(pts, [0, 0, 1, 1]) == pytest.approx(20.0)

    def test_degenerate_clusters_hit_floor(self):
        pts = [[0, 0], [0, 0], [1, 0], [1, 0]]
        assert cluster_ratio(pts, [0, 0, 1, 1]) == pytest.approx(1e12)

    def test_unstructured_baseline(self):
        rng = np.random.default_rng(3)
        assert cluster_ratio(rng.normal(size=(1000, 4)), rng.integers(0, 8, 1000)) < 0.5

    def test_needs_two_clusters(self):
        with pytest.raises(ConfigError):
            cluster_ratio(np.zeros((3, 2)), [1, 1, 1])
