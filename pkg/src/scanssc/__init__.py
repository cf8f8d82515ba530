"""Axis-wise scan attention and cumulative scan loss for voxel scene completion."""

from .voxel import AXES, IGNORE_LABEL, ConfigError

__version__ = "0.1.0"

__all__ = ["AXES", "IGNORE_LABEL", "ConfigError", "__version__"]
