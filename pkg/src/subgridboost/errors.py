"""Exception types shared across the package."""


class GeometryError(ValueError):
    """Tensor/layer shapes are incompatible."""


class StateError(RuntimeError):
    """Operation called in the wrong order (e.g. backward before forward)."""


class NumericError(ArithmeticError):
    """A computation produced NaN/Inf or otherwise diverged."""


class CheckpointError(ValueError):
    """Checkpoint file is malformed, truncated, or fails its checksum."""


class ConfigError(ValueError):
    """Run configuration is invalid."""
