"""Configuration management for the cross-view relation network."""

from .models import (
    AblationConfig,
    EvalConfig,
    GeneratorConfig,
    GradCheckConfig,
    LossWeights,
    ModelConfig,
    RunManifest,
    TrainConfig,
)
from .manager import ConfigManager
from ..errors import ConfigurationError, ValidationError

__all__ = [
    "AblationConfig",
    "EvalConfig",
    "GeneratorConfig",
    "GradCheckConfig",
    "LossWeights",
    "ModelConfig",
    "RunManifest",
    "TrainConfig",
    "ConfigManager",
    "ConfigurationError",
    "ValidationError",
]
