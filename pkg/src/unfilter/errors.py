"""Exception types shared across the package."""


class UnfilterError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(UnfilterError):
    """Input data or parameters violate a documented invariant."""


class UnknownNameError(UnfilterError, KeyError):
    """A name lookup (filter, backbone layer, ...) failed."""

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return Exception.__str__(self)


class ShapeError(UnfilterError):
    """Tensor or image shapes are incompatible."""


class ConfigError(UnfilterError):
    """A configuration is internally inconsistent."""


class CheckpointError(UnfilterError):
    """A checkpoint file is missing, corrupt, or of an unsupported version."""


class TrainingDivergenceError(UnfilterError):
    """A loss component became non-finite during training."""
