"""Prior-agreement scoring, Gaussian KL oracles and latent cluster structure.

The PAG score compares a diagonal Gaussian fitted to reversed latent codes
(principal standard deviations ``nu``) with the isotropic prior
``N(0, sigma^2 I)``; zero means perfect agreement.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from . import kernels
from .errors import ConfigError, DivergenceError, InsufficientDataError, ShapeError


@dataclass(frozen=True, eq=False)
class LatentCodeSet:
    codes: np.ndarray
    reversal_losses: np.ndarray
    source: str = ""
    steps_used: np.ndarray | None = None
    converged: np.ndarray | None = None
    failed: np.ndarray | None = None

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.float64)
        if codes.ndim != 2:
            raise ShapeError("codes must be an (n, d) matrix")
        losses = np.asarray(self.reversal_losses, dtype=np.float64)
        if losses.shape != (codes.shape[0],):
            raise ShapeError("one reversal loss per code row")
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "reversal_losses", losses)

    def __len__(self):
        return self.codes.shape[0]

    @property
    def dim(self):
        return self.codes.shape[1]

    @property
    def mean_loss(self):
        return float(np.mean(self.reversal_losses))


def _codes(codes):
    return codes.codes if isinstance(codes, LatentCodeSet) else np.asarray(codes, dtype=np.float64)


def singular_values(codes, normalization="centered"):
    """Principal standard deviations of a code matrix, descending.

    Singular values of the mean-centred codes scaled by ``1/sqrt(n-1)``,
    computed with one-sided Jacobi rotations. ``normalization="raw"`` skips
    centring and scaling; those values grow like ``sqrt(n)``.
    """
    if normalization not in ("centered", "raw"):
        raise ConfigError(f"unknown normalization {normalization!r}")
    z = _codes(codes)
    if z.ndim != 2:
        raise ShapeError("codes must be an (n, d) matrix")
    n, d = z.shape
    if n < d or n < 2:
        raise InsufficientDataError(f"need n >= d (and n >= 2) codes, got n={n}, d={d}")
    if not np.all(np.isfinite(z)):
        raise ConfigError("codes contain non-finite values")
    if normalization == "raw":
        return kernels.jacobi_singular_values(z)
    centred = (z - z.mean(axis=0)) / np.sqrt(n - 1)
    return kernels.jacobi_singular_values(centred)


def pag_score(nu, sigma):
    nu = np.asarray(nu, dtype=np.float64)
    if not sigma > 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    if np.any(nu < 0):
        raise ConfigError("singular values must be nonnegative")
    if np.any(nu == 0):
        raise DivergenceError("degenerate covariance (a singular value is 0): PAG is infinite")
    t = (nu / sigma) ** 2
    return float(0.5 * np.sum(t - np.log(t) - 1.0))


@dataclass(frozen=True, eq=False)
class PagReport:
    singular_values: np.ndarray
    prior_sigma: float
    pag: float
    n: int

    @property
    def d(self):
        return self.singular_values.shape[0]

    def spectrum_rows(self):
        return [(i, float(v)) for i, v in enumerate(self.singular_values)]


def pag_from_codes(codes, sigma=1.0, spectrum_path=None, report_path=None,
                   normalization="centered"):
    """PAG of a code set; optionally dumps the spectrum and the one-line report as CSV."""
    nu = singular_values(codes, normalization)
    report = PagReport(nu, float(sigma), pag_score(nu, sigma), _codes(codes).shape[0])
    if spectrum_path is not None or report_path is not None:
        from . import fileio

        if spectrum_path is not None:
            fileio.write_csv(spectrum_path, ("index", "singular_value"), report.spectrum_rows())
        if report_path is not None:
            fileio.write_csv(report_path, ("n", "d", "sigma", "pag"),
                             [(report.n, report.d, report.prior_sigma, report.pag)])
    return report


# -- KL divergences -----------------------------------------------------------


def kl_diag_gaussian(mu0, var0, mu1, var1):
    """``KL(N(mu0, diag var0) || N(mu1, diag var1))`` in closed form."""
    mu0, var0, mu1, var1 = (np.atleast_1d(np.asarray(a, dtype=np.float64))
                            for a in (mu0, var0, mu1, var1))
    if np.any(var0 <= 0) or np.any(var1 <= 0):
        raise ConfigError("variances must be positive")
    ratio = var0 / var1
    return float(0.5 * np.sum(ratio + (mu1 - mu0) ** 2 / var1 - 1.0 - np.log(ratio)))


def gaussian_kl(mu0, cov0, mu1, cov1):
    """KL between full-covariance Gaussians via Cholesky factors."""
    mu0, mu1 = np.asarray(mu0, float), np.asarray(mu1, float)
    cov0, cov1 = np.asarray(cov0, float), np.asarray(cov1, float)
    k = mu0.shape[0]
    L0 = np.linalg.cholesky(cov0)
    L1 = np.linalg.cholesky(cov1)
    M = np.linalg.solve(L1, L0)
    dm = np.linalg.solve(L1, mu1 - mu0)
    logdet = 2.0 * (np.sum(np.log(np.diag(L1))) - np.sum(np.log(np.diag(L0))))
    return float(0.5 * (np.sum(M * M) + dm @ dm - k + logdet))


class MCEstimate(NamedTuple):
    value: float
    stderr: float


def kl_mc_estimate(sample_p: Callable, logpdf_p: Callable, logpdf_q: Callable, n_samples, seed=0):
    """Monte Carlo ``E_P[log P - log Q]``.

    ``sample_p(n, rng)`` draws ``n`` rows from P; the log-densities map a batch
    of rows to a vector.
    """
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    x = sample_p(n_samples, rng)
    diff = np.asarray(logpdf_p(x), float) - np.asarray(logpdf_q(x), float)
    se = float(diff.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else float("inf")
    return MCEstimate(float(diff.mean()), se)


def diag_gaussian_logpdf(mu, var):
    mu, var = np.asarray(mu, float), np.asarray(var, float)

    def logpdf(x):
        return -0.5 * np.sum((x - mu) ** 2 / var + np.log(2 * np.pi * var), axis=1)

    return logpdf


def diag_gaussian_sampler(mu, var):
    mu, sd = np.asarray(mu, float), np.sqrt(np.asarray(var, float))

    def sample(n, rng):
        return mu + sd * rng.standard_normal((n, mu.shape[0]))

    return sample


@dataclass(frozen=True, eq=False)
class LinearGaussianModel:
    """``z ~ N(prior_mean, prior_cov)``, ``x | z ~ N(weight @ z + offset, noise_cov)``."""

    prior_mean: np.ndarray
    prior_cov: np.ndarray
    weight: np.ndarray
    offset: np.ndarray
    noise_cov: np.ndarray

    def joint(self):
        S, A = self.prior_cov, self.weight
        mean = np.concatenate([self.prior_mean, A @ self.prior_mean + self.offset])
        cross = A @ S
        cov = np.block([[S, cross.T], [cross, A @ S @ A.T + self.noise_cov]])
        return mean, cov

    def same_conditional(self, other):
        return (np.array_equal(self.weight, other.weight)
                and np.array_equal(self.offset, other.offset)
                and np.array_equal(self.noise_cov, other.noise_cov))

    @classmethod
    def random(cls, rng, d, m):
        def spd(k):
            a = rng.normal(size=(k, k))
            return a @ a.T + 0.5 * np.eye(k)

        return cls(rng.normal(size=d), spd(d), rng.normal(size=(m, d)), rng.normal(size=m), spd(m))


@dataclass(frozen=True)
class KLDecomposition:
    lhs: float
    rhs_prior_term: float
    rhs_conditional_term: float
    gap: float


def kl_decomposition_check(p, q):
    """Joint KL versus prior KL plus expected conditional KL, all closed form."""
    if not (isinstance(p, LinearGaussianModel) and isinstance(q, LinearGaussianModel)):
        raise ConfigError("only linear-Gaussian latent models are supported")
    lhs = gaussian_kl(*p.joint(), *q.joint())
    prior = gaussian_kl(p.prior_mean, p.prior_cov, q.prior_mean, q.prior_cov)
    if p.same_conditional(q):
        cond = 0.0
    else:
        m = p.offset.shape[0]
        Lq = np.linalg.cholesky(q.noise_cov)
        Lp = np.linalg.cholesky(p.noise_cov)
        M = np.linalg.solve(Lq, Lp)
        logdet = 2.0 * (np.sum(np.log(np.diag(Lq))) - np.sum(np.log(np.diag(Lp))))
        D = q.weight - p.weight
        mean_shift = np.linalg.solve(Lq, D @ p.prior_mean + q.offset - p.offset)
        spread = np.linalg.solve(Lq, D @ np.linalg.cholesky(p.prior_cov))
        cond = float(0.5 * (np.sum(M * M) - m + logdet + mean_shift @ mean_shift
                            + np.sum(spread * spread)))
    return KLDecomposition(lhs, prior, cond, abs(lhs - (prior + cond)))


# -- latent structure ---------------------------------------------------------

WITHIN_FLOOR = 1e-12


def cluster_ratio(points, labels):
    """Mean pairwise centroid distance over mean point-to-own-centroid distance."""
    x = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    if x.ndim != 2 or labels.shape != (x.shape[0],):
        raise ShapeError("points must be (n, d) with one label per row")
    classes, inv = np.unique(labels, return_inverse=True)
    if classes.size < 2:
        raise ConfigError("cluster ratio is undefined for fewer than two clusters")
    centroids = np.stack([x[inv == c].mean(axis=0) for c in range(classes.size)])
    iu = np.triu_indices(classes.size, k=1)
    between = np.linalg.norm(centroids[:, None, :] - centroids[None, :, :], axis=-1)[iu].mean()
    within = np.linalg.norm(x - centroids[inv], axis=1).mean()
    return float(between / max(within, WITHIN_FLOOR))
