"""Learning a data-induced latent prior with a secondary GAN (PGAN).

Pipeline: reverse the dataset once through a trained generator, fit a small
GAN whose generator ``h`` maps auxiliary noise to those codes, then keep
training the original GAN with ``h(noise)`` as its prior.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .errors import ConfigError
from .gan import GanModel, PriorSpec, TrainConfig, gan_train, sample_prior
from .metrics import LatentCodeSet, pag_from_codes
from .nn import RmsPropState, derive_seed, init_network, mlp_specs, network_forward
from .reversal import ReversalOptions, reverse_batch


def collect_induced_codes(generator, dataset, opts=None, seed=0, path=None, checkpoint_id=""):
    """Reverse the whole dataset once; optionally persist the code set."""
    source = f"{getattr(dataset, 'source', 'array')}|{checkpoint_id}"
    codes = reverse_batch(generator, dataset, opts or ReversalOptions(), seed, source)
    if path is not None:
        from . import fileio

        fileio.write_codes(codes, path, {"seed": seed})
    return codes


@dataclass(frozen=True)
class PganConfig:
    aux_dim: int | None = None
    width: int = 64
    steps: int = 2000
    seed: int = 0
    batch_size: int = 100
    lr: float = 3e-4

    def resolved_aux_dim(self, d):
        aux = d if self.aux_dim is None else self.aux_dim
        if aux < d:
            raise ConfigError(f"auxiliary dimension {aux} must be >= latent dimension {d}")
        return aux


def build_pgan(d, config):
    """Four fully connected layers on each side; the mapping ends linearly since codes are unbounded."""
    aux = config.resolved_aux_dim(d)
    w = config.width
    h = init_network(mlp_specs([aux, w, w, w, d], "relu", "identity"), derive_seed(config.seed, 10))
    disc = init_network(mlp_specs([d, w, w, w, 1], "leaky_relu", "sigmoid"), derive_seed(config.seed, 11))
    return GanModel(
        generator=h,
        discriminator=disc,
        prior=PriorSpec.isotropic(aux, 1.0),
        g_state=RmsPropState.zeros_like(h.params, step_size=config.lr),
        d_state=RmsPropState.zeros_like(disc.params, step_size=config.lr),
    )


def fit_pgan(codes, config=None, log_path=None):
    """Train the PGAN on code rows; returns the whole PGAN model."""
    config = config or PganConfig()
    z = codes.codes if isinstance(codes, LatentCodeSet) else np.asarray(codes, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] == 0:
        raise ConfigError("need a nonempty (n, d) code matrix")
    model = build_pgan(z.shape[1], config)
    tc = TrainConfig(batch_size=min(config.batch_size, max(2, z.shape[0])), steps=config.steps,
                     lr=config.lr, seed=config.seed, log_path=log_path)
    model, _, _ = gan_train(model, z, tc)
    return model


def train_pgan(codes, config=None, log_path=None):
    """The learned mapping ``h: Z' -> Z``."""
    return fit_pgan(codes, config, log_path).generator


def induced_prior_sampler(h, base_sigma=1.0):
    """Prior whose samples are ``h(N(0, base_sigma^2 I))``."""
    return PriorSpec.induced(h, PriorSpec.isotropic(h.in_dim, base_sigma))


def retrain_with_induced_prior(model, h, dataset, config):
    """Continue training ``model`` with its prior swapped for ``h``'s induced prior.

    ``h`` is only read, never updated. Returns ``(model, log_rows)``.
    """
    if h.out_dim != model.latent_dim:
        raise ConfigError(f"mapping outputs {h.out_dim} dims, generator expects {model.latent_dim}")
    swapped = replace(model, prior=induced_prior_sampler(h, model.prior.root().sigma))
    if config.steps == 0:
        return swapped, []
    out, rows, _ = gan_train(swapped, dataset, config)
    return out, rows


def model_pag(model, dataset, opts=None, seed=0):
    """PAG of a model against its own root prior.

    Codes are found by reversing the generator composed with any induced-prior
    mappings, so they live in the space the root Gaussian is defined on.
    """
    codes = reverse_batch(model.effective_generator(), dataset, opts or ReversalOptions(), seed)
    return pag_from_codes(codes, model.prior.root().sigma), codes


# -- prior/data disagreement --------------------------------------------------


@dataclass(frozen=True, eq=False)
class DisagreementReport:
    ranked: np.ndarray  # indices into the candidate batch, most disagreeing first
    scores: np.ndarray  # score of ranked[i]; descending
    candidates: np.ndarray
    top_samples: np.ndarray  # decoded top-k candidates, in rank order
    k: int

    @property
    def top(self):
        return self.ranked[:self.k]


def disagreement_scores(candidates, codes):
    """Mean squared distance of each candidate to all code rows."""
    return kernels.mean_sq_distance(candidates, codes)


def disagreement_rank(generator, prior, codes, n_prior=1000, k=20, seed=0):
    """Prior draws ranked by mean squared distance to the reversed codes."""
    z = codes.codes if isinstance(codes, LatentCodeSet) else np.asarray(codes, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] == 0:
        raise ConfigError("code set is empty")
    if n_prior < k or k < 1:
        raise ConfigError(f"need 1 <= k <= n_prior, got k={k}, n_prior={n_prior}")
    cand = sample_prior(prior, n_prior, seed)
    scores = disagreement_scores(cand, z)
    order = np.argsort(-scores, kind="stable")
    top = network_forward(generator, cand[order[:k]])[0]
    return DisagreementReport(order, scores[order], cand, top, k)
