"""Space-time fractional Cauchy problems with variable time coefficients,
their Clifford-valued Dirac-type counterparts and time-coefficient recovery."""

from __future__ import annotations

from fracdirac import clifford, inverse, solver, specfun, timefrac
from fracdirac.errors import (
    ConvergenceError,
    FracDiracError,
    GridError,
    PoleError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "FracDiracError",
    "GridError",
    "PoleError",
    "ValidationError",
    "clifford",
    "inverse",
    "solver",
    "specfun",
    "timefrac",
]
