"""Dual-stream prompt tuning for dynamic facial expression recognition, in numpy.

A frozen text tower and a frozen vision tower receive learnable prompts at
their first ``M`` layers (the prompt cluster); frame features are then
aggregated with temporal attention and text-guided semantic attention, and
trained with a contrastive objective against class descriptions.
"""
from .config import RunConfig, parse_config
from .errors import (
    CapacityError, ConfigurationError, ContractError, DimensionError, DuseError, NumericalError,
)
from .model import DuseModel
from .tensor import Tensor, finite_difference_check, no_grad
from .training import ablation_run, contrastive_loss, evaluate, train

__all__ = [
    "CapacityError",
    "ConfigurationError",
    "ContractError",
    "DimensionError",
    "DuseError",
    "DuseModel",
    "NumericalError",
    "RunConfig",
    "Tensor",
    "ablation_run",
    "contrastive_loss",
    "evaluate",
    "finite_difference_check",
    "no_grad",
    "parse_config",
    "train",
]

__version__ = "0.1.0"
