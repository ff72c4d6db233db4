"""Exception types raised across the package."""

from __future__ import annotations


class SequencingError(ValueError):
    """A frame arrived out of order or repeated a tick."""


class DimensionError(ValueError):
    """Vector lengths are incompatible or too short."""


class DegenerateWindowError(ValueError):
    """A window has zero variance, so its correlation is undefined."""


class NotReadyError(RuntimeError):
    """Not enough complete windows to build a similarity network."""


class UsageError(RuntimeError):
    """An operation was called in a state that does not allow it."""


class DomainError(ValueError):
    """An argument lies outside the domain of the function."""


class SizeError(ValueError):
    """Problem too large for an exact solver."""


class CalibrationError(RuntimeError):
    """The target ARL could not be bracketed or met.

    Attributes:
        diagnostics: Mapping of probed thresholds to estimated ARL values.
    """

    def __init__(self, message: str, diagnostics: dict | None = None) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConvergenceError(RuntimeError):
    """Power iteration did not converge."""

    def __init__(self, message: str, residual: float) -> None:
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual
