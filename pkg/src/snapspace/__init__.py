"""Snapshot subspaces of parabolic evolutions and exponential moment diagnostics."""

from .errors import (
    CollisionError,
    ConfigError,
    DataIOError,
    NumericalError,
    SnapspaceError,
)

__version__ = "0.1.0"

__all__ = [
    "CollisionError",
    "ConfigError",
    "DataIOError",
    "NumericalError",
    "SnapspaceError",
    "__version__",
]
