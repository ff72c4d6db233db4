"""Online change-point detection over sequences of sensor similarity networks."""

from simnet_cpd.errors import (
    CalibrationError,
    ConvergenceError,
    DegenerateWindowError,
    DimensionError,
    DomainError,
    NotReadyError,
    SequencingError,
    SizeError,
    UsageError,
)

__version__ = "0.1.0"

__all__ = [
    "CalibrationError",
    "ConvergenceError",
    "DegenerateWindowError",
    "DimensionError",
    "DomainError",
    "NotReadyError",
    "SequencingError",
    "SizeError",
    "UsageError",
    "__version__",
]
