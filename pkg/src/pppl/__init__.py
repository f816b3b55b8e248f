"""Proportional progressive pseudo-labeling for unsupervised domain
adaptation: a source-trained classifier is retrained on its own pseudo-labeled
target samples under a certainty-ranked curriculum with class-proportion caps.
"""

__version__ = "0.1.0"

from . import adapt, data, harness, metrics, nn
from .errors import (
    ConfigError,
    DataError,
    DegenerateSeriesError,
    DegenerateStateError,
    NumericalError,
    PPPLError,
    ShapeError,
)

__all__ = [
    "ConfigError",
    "DataError",
    "DegenerateSeriesError",
    "DegenerateStateError",
    "NumericalError",
    "PPPLError",
    "ShapeError",
    "adapt",
    "data",
    "harness",
    "metrics",
    "nn",
    "__version__",
]
