"""Latent prior learning for GANs: generator reversal, PAG scoring, PGAN priors."""

from ._accel import backend
from .datasets import Dataset, load_dataset, make_blob_images, make_ring2d, mode_coverage, parse_idx
from .gan import (
    GanModel,
    PriorSpec,
    TrainConfig,
    discriminator_loss,
    gan_train,
    gan_train_step,
    generator_loss,
    make_gan,
    sample_generator,
    sample_prior,
)
from .metrics import (
    LatentCodeSet,
    PagReport,
    cluster_ratio,
    kl_decomposition_check,
    kl_diag_gaussian,
    kl_mc_estimate,
    pag_from_codes,
    pag_score,
    singular_values,
)
from .nn import (
    LayerSpec,
    MlpNetwork,
    RmsPropState,
    apply_activation_grad,
    gaussian_sample,
    init_network,
    network_backward,
    network_forward,
    rmsprop_step,
)
from .prior import (
    PganConfig,
    collect_induced_codes,
    disagreement_rank,
    induced_prior_sampler,
    retrain_with_induced_prior,
    train_pgan,
)
from .reversal import (
    ReversalOptions,
    curvature_check,
    random_reconstruction_experiment,
    reverse,
    reverse_batch,
)

__version__ = "0.1.0"

__all__ = [
    "apply_activation_grad",
    "backend",
    "cluster_ratio",
    "collect_induced_codes",
    "curvature_check",
    "Dataset",
    "disagreement_rank",
    "discriminator_loss",
    "gan_train",
    "gan_train_step",
    "GanModel",
    "gaussian_sample",
    "generator_loss",
    "induced_prior_sampler",
    "init_network",
    "kl_decomposition_check",
    "kl_diag_gaussian",
    "kl_mc_estimate",
    "LatentCodeSet",
    "LayerSpec",
    "load_dataset",
    "make_blob_images",
    "make_gan",
    "make_ring2d",
    "MlpNetwork",
    "mode_coverage",
    "network_backward",
    "network_forward",
    "pag_from_codes",
    "pag_score",
    "PagReport",
    "parse_idx",
    "PganConfig",
    "PriorSpec",
    "random_reconstruction_experiment",
    "retrain_with_induced_prior",
    "ReversalOptions",
    "reverse",
    "reverse_batch",
    "rmsprop_step",
    "RmsPropState",
    "sample_generator",
    "sample_prior",
    "singular_values",
    "train_pgan",
    "TrainConfig",
]
