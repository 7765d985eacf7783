"""Numerical laboratory for pseudorandom-state constructions built on a common Haar random state."""

from .gap import GapReport
from .qmath import (
    ConfigurationError,
    DensityMatrix,
    HermitianOp,
    NumericError,
    RegisterLayout,
    StateVector,
)

__all__ = [
    "ConfigurationError",
    "DensityMatrix",
    "GapReport",
    "HermitianOp",
    "NumericError",
    "RegisterLayout",
    "StateVector",
]
__version__ = "0.1.0"
