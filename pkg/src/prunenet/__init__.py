"""Structured pruning of transformer layers with a learned row-selection policy."""
from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .errors import CheckpointError, ConfigError, ShapeError
from .model import ModelConfig, Model, synthesize_model, param_count
from .checkpoint import load_checkpoint, save_checkpoint
from .spectral import ks_distance, ad_distance, singular_values
from .policy import PolicyParams, TrainConfig, train_policy
from .pruner import CompressionPlan, compress_model
from .analysis import build_report, effective_sparsity, flops_estimate, intrinsic_threshold

__all__ = [
    "CheckpointError", "ConfigError", "ShapeError",
    "ModelConfig", "Model", "synthesize_model", "param_count",
    "load_checkpoint", "save_checkpoint",
    "ks_distance", "ad_distance", "singular_values",
    "PolicyParams", "TrainConfig", "train_policy",
    "CompressionPlan", "compress_model",
    "build_report", "effective_sparsity", "flops_estimate", "intrinsic_threshold",
]
