"""Parallel streamline parcellation with a set-transformer over sub-tractograms."""

from .core import NormalizationParams, Tractogram, compute_normalization, normalize, resample, reverse
from .embedding import flip_invariant_embed, raw_embed, reconstruct
from .nn.model import EncoderConfig
from .pipeline import (
    AugmentConfig,
    ClusterBundleMap,
    ModelCheckpoint,
    TrainConfig,
    evaluate,
    infer,
    partition,
    stability_experiment,
    train,
)

__version__ = "0.1.0"
