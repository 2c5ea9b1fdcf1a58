"""GAN training against a configurable latent prior.

The prior is either an isotropic Gaussian or an *induced* prior, i.e. base
Gaussian noise pushed through a frozen mapping network. Training is
functional: every step returns a new :class:`GanModel`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericError, ShapeError
from .nn import (
    MlpNetwork,
    RmsPropState,
    as_matrix,
    compose,
    derive_seed,
    gaussian_sample,
    init_network,
    mlp_specs,
    network_backward,
    network_forward,
    rmsprop_step,
    rng_for,
)

log = logging.getLogger(__name__)

SCORE_CLAMP = 1e-7
METRIC_HEADER = ("step", "d_loss", "g_loss")


@dataclass(frozen=True, eq=False)
class PriorSpec:
    dim: int
    kind: str = "isotropic_gaussian"
    sigma: float = 1.0
    mapping: MlpNetwork | None = None
    base: PriorSpec | None = None

    def __post_init__(self):
        if self.kind == "isotropic_gaussian":
            if not self.sigma > 0:
                raise ConfigError(f"prior sigma must be positive, got {self.sigma}")
        elif self.kind == "induced":
            if self.mapping is None or self.base is None:
                raise ConfigError("induced prior needs a mapping and a base prior")
            if self.mapping.out_dim != self.dim:
                raise ConfigError(f"mapping output dim {self.mapping.out_dim} != prior dim {self.dim}")
            if self.mapping.in_dim != self.base.dim:
                raise ConfigError(f"mapping input dim {self.mapping.in_dim} != base dim {self.base.dim}")
        else:
            raise ConfigError(f"unknown prior kind {self.kind!r}")

    @classmethod
    def isotropic(cls, dim, sigma=1.0):
        return cls(dim=dim, kind="isotropic_gaussian", sigma=float(sigma))

    @classmethod
    def induced(cls, mapping, base=None):
        base = base if base is not None else cls.isotropic(mapping.in_dim)
        return cls(dim=mapping.out_dim, kind="induced", mapping=mapping, base=base)

    def root(self):
        """The isotropic Gaussian at the bottom of the induced chain."""
        p = self
        while p.kind == "induced":
            p = p.base
        return p


def sample_prior(prior, n, seed):
    if prior.kind == "isotropic_gaussian":
        return gaussian_sample(n, prior.dim, 0.0, prior.sigma, seed)
    return network_forward(prior.mapping, sample_prior(prior.base, n, seed))[0]


def prior_chain(prior):
    """Mapping networks from the root noise up to ``prior``, outermost last."""
    maps = []
    while prior.kind == "induced":
        maps.append(prior.mapping)
        prior = prior.base
    return maps[::-1]


@dataclass(frozen=True, eq=False)
class GanModel:
    generator: MlpNetwork
    discriminator: MlpNetwork
    prior: PriorSpec
    g_state: RmsPropState
    d_state: RmsPropState
    step: int = 0

    def __post_init__(self):
        if self.generator.in_dim != self.prior.dim:
            raise ConfigError(
                f"generator input dim {self.generator.in_dim} != prior dim {self.prior.dim}")
        if self.discriminator.in_dim != self.generator.out_dim:
            raise ConfigError(
                f"discriminator input dim {self.discriminator.in_dim} "
                f"!= generator output dim {self.generator.out_dim}")
        if self.discriminator.out_dim != 1:
            raise ConfigError("discriminator must output a single score")

    @property
    def latent_dim(self):
        return self.prior.dim

    @property
    def data_dim(self):
        return self.generator.out_dim

    def effective_generator(self):
        """Generator composed with any induced-prior mappings, fed by root noise."""
        return compose(*prior_chain(self.prior), self.generator)

    def equal(self, other):
        return (
            self.generator.equal(other.generator)
            and self.discriminator.equal(other.discriminator)
            and self.step == other.step
        )


def make_gan(data_dim, latent_dim=20, hidden=(128, 128), sigma=1.0, seed=0, lr=3e-4,
             output="tanh", leak=0.2, disc_hidden=None):
    """Fresh MLP GAN: ReLU generator with tanh output, leaky-ReLU discriminator with sigmoid."""
    disc_hidden = hidden if disc_hidden is None else disc_hidden
    g = init_network(mlp_specs([latent_dim, *hidden, data_dim], "relu", output), derive_seed(seed, 0))
    d = init_network(
        mlp_specs([data_dim, *disc_hidden, 1], "leaky_relu", "sigmoid", leak), derive_seed(seed, 1))
    return GanModel(
        generator=g,
        discriminator=d,
        prior=PriorSpec.isotropic(latent_dim, sigma),
        g_state=RmsPropState.zeros_like(g.params, step_size=lr),
        d_state=RmsPropState.zeros_like(d.params, step_size=lr),
    )


# -- losses -------------------------------------------------------------------


def _clamped(scores):
    s = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(s)) or np.any((s < 0.0) | (s > 1.0)):
        raise NumericError("discriminator scores must lie in [0, 1]")
    return np.clip(s, SCORE_CLAMP, 1.0 - SCORE_CLAMP)


def discriminator_loss(real_scores, fake_scores):
    r, f = _clamped(real_scores), _clamped(fake_scores)
    return float(np.mean(-np.log(r)) + np.mean(-np.log1p(-f)))


def generator_loss(fake_scores):
    """Non-saturating generator loss ``mean(-log D(G(z)))``."""
    return float(np.mean(-np.log(_clamped(fake_scores))))


def _d_loss_grads(real_scores, fake_scores):
    r, f = _clamped(real_scores), _clamped(fake_scores)
    return -1.0 / (r * r.shape[0]), 1.0 / ((1.0 - f) * f.shape[0])


def _g_loss_grad(fake_scores):
    f = _clamped(fake_scores)
    return -1.0 / (f * f.shape[0])


# -- training -----------------------------------------------------------------


def gan_train_step(model, real_batch, seed):
    """One discriminator update, then one generator update through the updated discriminator.

    Returns ``(new_model, metrics)``; the reported losses are evaluated before
    either update.
    """
    real = as_matrix(real_batch, model.discriminator.in_dim)
    n = real.shape[0]
    G, D = model.generator, model.discriminator

    z = sample_prior(model.prior, n, seed)
    fake, g_trace = network_forward(G, z)
    d_real, tr_real = network_forward(D, real)
    d_fake, tr_fake = network_forward(D, fake)
    d_loss = discriminator_loss(d_real, d_fake)
    g_loss = generator_loss(d_fake)
    if not (np.isfinite(d_loss) and np.isfinite(g_loss)):
        raise NumericError(f"non-finite loss at step {model.step}", step=model.step)

    gr, gf = _d_loss_grads(d_real, d_fake)
    grads_r, _ = network_backward(D, tr_real, gr)
    grads_f, _ = network_backward(D, tr_fake, gf)
    d_grads = [a + b for a, b in zip(grads_r, grads_f)]
    try:
        d_params, d_state = rmsprop_step(D.params, d_grads, model.d_state)
    except NumericError as e:
        raise NumericError(f"discriminator update failed at step {model.step}: {e}",
                           layer=e.layer, step=model.step) from e
    D_new = D.with_params(d_params)

    d_fake2, tr_fake2 = network_forward(D_new, fake)
    _, fake_grad = network_backward(D_new, tr_fake2, _g_loss_grad(d_fake2), param_grads=False)
    g_grads, _ = network_backward(G, g_trace, fake_grad)
    try:
        g_params, g_state = rmsprop_step(G.params, g_grads, model.g_state)
    except NumericError as e:
        raise NumericError(f"generator update failed at step {model.step}: {e}",
                           layer=e.layer, step=model.step) from e

    new = replace(model, generator=G.with_params(g_params), discriminator=D_new,
                  g_state=g_state, d_state=d_state, step=model.step + 1)
    return new, {"step": model.step, "d_loss": d_loss, "g_loss": g_loss}


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 100
    steps: int = 1000
    lr: float = 3e-4
    seed: int = 0
    checkpoint_every: int = 0
    log_path: str | Path | None = None
    checkpoint_dir: str | Path | None = None

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.steps < 0:
            raise ConfigError(f"steps must be >= 0, got {self.steps}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")


def batch_indices(n, batch_size, seed, step):
    """Minibatch for global ``step``: consecutive slices of a per-epoch shuffle.

    Depends only on ``(n, batch_size, seed, step)`` so training resumes exactly.
    """
    bs = min(batch_size, n)
    per_epoch = n // bs
    epoch, slot = divmod(step, per_epoch)
    perm = rng_for(seed, epoch, 0).permutation(n)
    return perm[slot * bs:(slot + 1) * bs]


def _samples(dataset):
    return as_matrix(getattr(dataset, "samples", dataset))


def gan_train(model, dataset, config):
    """Run ``config.steps`` steps. Returns ``(model, log_rows, checkpoint_paths)``.

    Step ``t`` (global, i.e. ``model.step``) draws its minibatch and prior noise
    from seeds derived from ``(config.seed, t)``, so resuming from a checkpoint
    reproduces uninterrupted training.
    """
    from . import fileio

    data = _samples(dataset)
    if data.shape[0] == 0:
        raise ConfigError("dataset is empty")
    if data.shape[1] != model.data_dim:
        raise ShapeError(f"dataset has {data.shape[1]} columns, model expects {model.data_dim}")
    model = replace(model, g_state=model.g_state.replace(step_size=config.lr),
                    d_state=model.d_state.replace(step_size=config.lr))
    rows, ckpts = [], []
    ckpt_dir = Path(config.checkpoint_dir) if config.checkpoint_dir is not None else None
    for local in range(1, config.steps + 1):
        t = model.step
        batch = data[batch_indices(data.shape[0], config.batch_size, config.seed, t)]
        try:
            model, metrics = gan_train_step(model, batch, derive_seed(config.seed, t, 1))
        except NumericError as e:
            e.last_model = model
            raise
        rows.append(metrics)
        if config.log_path is not None:
            fileio.append_csv(config.log_path, METRIC_HEADER,
                              (metrics["step"], metrics["d_loss"], metrics["g_loss"]))
        if ckpt_dir is not None and config.checkpoint_every and local % config.checkpoint_every == 0:
            ckpts.append(fileio.write_checkpoint(model, ckpt_dir / f"ckpt_{model.step:07d}.lpl"))
        if local % 500 == 0:
            log.debug("step %d d_loss=%.4f g_loss=%.4f", t, metrics["d_loss"], metrics["g_loss"])
    if ckpt_dir is not None and config.steps > 0:
        ckpts.append(fileio.write_checkpoint(model, ckpt_dir / "final.lpl"))
    return model, rows, ckpts


def sample_generator(model, n, seed):
    if n < 1:
        raise ConfigError("n must be >= 1")
    return network_forward(model.generator, sample_prior(model.prior, n, seed))[0]
