"""Recurrent auto-encoder for passive SAR image reconstruction."""

from ._kernels import BACKEND
from .baselines import BaselineConfig, run_baseline
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .encoder import EncoderParams, Penalty, forward_propagate, init_params
from .experiment import run_experiment
from .geometry import (ForwardModel, ImagingGeometry, build_forward_model,
                       init_unknown_model, spectral_norm_sq)
from .scenes import Measurement, Scene, TrainingSet
from .training import TrainConfig, accumulate_gradients, train

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BaselineConfig", "run_baseline", "ConfigError", "ExperimentConfig",
    "load_config", "parse_config", "EncoderParams", "Penalty", "forward_propagate",
    "init_params", "run_experiment", "ForwardModel", "ImagingGeometry",
    "build_forward_model", "init_unknown_model", "spectral_norm_sq", "Measurement", "Scene",
    "TrainingSet", "TrainConfig", "accumulate_gradients", "train", "__version__",
]
