"""Multispectral smoke/cloud segmentation toolkit.

Six-band tile ingestion, polygon-annotation rasterization, a family of
UNet/transformer segmentation variants behind a small name grammar, the
gap-moderated F1h evaluation metric for partially labelled data, and the
training/evaluation/prediction CLI that ties them together.
"""

from .blocks import BlockConfig, predict_classes
from .factory import GRID_NAMES, ModelSpec, build_model, enumerate_grid, parse_model_name
from .imagery import MultibandImage, load_multiband
from .masks import CLEAR, CLOUD, GAP, SMOKE, mask_to_rgb, rgb_to_mask
from .metrics import aggregate, evaluate_image
from .training import TrainConfig, masked_mse_loss, run_sessions, train_session

__all__ = [
    "BlockConfig",
    "CLEAR",
    "CLOUD",
    "GAP",
    "GRID_NAMES",
    "ModelSpec",
    "MultibandImage",
    "SMOKE",
    "TrainConfig",
    "aggregate",
    "build_model",
    "enumerate_grid",
    "evaluate_image",
    "load_multiband",
    "mask_to_rgb",
    "masked_mse_loss",
    "parse_model_name",
    "predict_classes",
    "rgb_to_mask",
    "run_sessions",
    "train_session",
]

__version__ = "0.1.0"
