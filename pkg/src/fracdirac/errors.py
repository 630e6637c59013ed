"""Exception hierarchy shared by all fracdirac modules."""

from __future__ import annotations


class FracDiracError(Exception):
    """Base class; ``code`` is the machine-readable reason used by the CLI."""

    code = "ERROR"


class ValidationError(FracDiracError, ValueError):
    """Invalid input: bad order, non-monotone clock, malformed problem."""

    code = "BAD_INPUT"

    def __init__(self, message: str, field: str | None = None) -> None:
        super().__init__(message)
        self.field = field


class GridError(ValidationError):
    """Time grid too short or not matching the clock / series."""

    code = "BAD_GRID"


class PoleError(FracDiracError, ValueError):
    """A Gamma function pole was hit."""

    code = "GAMMA_POLE"


class ConvergenceError(FracDiracError, RuntimeError):
    """A series or iteration failed to reach its tolerance."""

    code = "NO_CONVERGENCE"

    def __init__(self, message: str, report: dict | None = None) -> None:
        super().__init__(message)
        self.report = report or {}
