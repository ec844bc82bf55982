"""Contrastive graph embedding engine (numpy, analytic gradients)."""

from .features import (
    EDGE_FEATURE_DIM,
    NODE_FEATURE_DIM,
    FeatureStats,
    FeaturizedGraph,
    augment,
    featurize,
)
from .gine import EncoderConfig, encode, encode_backward, init_params
from .loss import nt_xent_loss
from .train import TrainResult, load_checkpoint, save_checkpoint, train

__all__ = [
    "EDGE_FEATURE_DIM",
    "NODE_FEATURE_DIM",
    "FeatureStats",
    "FeaturizedGraph",
    "augment",
    "featurize",
    "EncoderConfig",
    "encode",
    "encode_backward",
    "init_params",
    "nt_xent_loss",
    "TrainResult",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]
