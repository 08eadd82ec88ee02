"""Asymmetric, uncertainty-aware GAN for unpaired adverse-to-normal image translation."""

from .config import ConfigError, Domain, ImageBatch, TrainConfig, load_config, save_config, seed_all
from .engine import TrainState, checkpoint_load, checkpoint_save, train, train_step
from .estimator import AsymmetricTranslator
from .evaluation import EmbeddingSet, LabelMap, frechet_distance, mean_iou
from .graph import PathOutputs, forward_all_paths
from .losses import LossReport
from .networks import ModelBundle, init_model_bundle

__all__ = [
    "AsymmetricTranslator",
    "ConfigError",
    "Domain",
    "EmbeddingSet",
    "ImageBatch",
    "LabelMap",
    "LossReport",
    "ModelBundle",
    "PathOutputs",
    "TrainConfig",
    "TrainState",
    "checkpoint_load",
    "checkpoint_save",
    "forward_all_paths",
    "frechet_distance",
    "init_model_bundle",
    "load_config",
    "mean_iou",
    "save_config",
    "seed_all",
    "train",
    "train_step",
]

__version__ = "0.1.0"
