"""Instagram-style filter synthesis, a filter-removal GAN, and evaluation tools."""

__version__ = "0.1.0"

from .errors import (
    CheckpointError,
    ConfigError,
    ShapeError,
    TrainingDivergenceError,
    UnfilterError,
    UnknownNameError,
    ValidationError,
)
from .image import RgbImage

__all__ = [
    "RgbImage",
    "UnfilterError",
    "ValidationError",
    "UnknownNameError",
    "ShapeError",
    "ConfigError",
    "CheckpointError",
    "TrainingDivergenceError",
    "__version__",
]
