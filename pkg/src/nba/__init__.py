"""Balls-into-bins allocation under noisy and outdated load information."""
from .core import LoadState, NormalizedView, allocate, gap, normalized
from .errors import (
    ConfigError,
    ContractViolation,
    NBAError,
    ParameterError,
    PotentialOverflowError,
    ResourceError,
)
from .rng import RngStream, substream

__version__ = "0.1.0"
