"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericalError -> 3.
"""


class PPPLError(Exception):
    """Base class for all package errors."""


class ConfigError(PPPLError):
    """Invalid configuration, dimensions, or arguments."""


class ShapeError(ConfigError):
    """Array shape does not match the model or batch contract."""


class DataError(PPPLError):
    """Unusable input data (malformed files, degenerate series, ...)."""


class DegenerateSeriesError(DataError):
    """Series cannot be normalized (zero standard deviation)."""


class NumericalError(PPPLError):
    """Non-finite values encountered during training."""


class DegenerateStateError(NumericalError):
    """Adaptation round left no usable training samples."""
