"""
RegCal - Error Types
Exception hierarchy shared by the library and the command-line front end
"""

from typing import Any, Optional


class RegCalError(Exception):
    """Base class for all library errors."""

    exit_code: int = 1


class DataError(RegCalError, ValueError):
    """Input data is malformed, inconsistent or out of its domain."""

    exit_code = 2

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalError(RegCalError, ArithmeticError):
    """A numerical routine failed (non-SPD matrix, non-finite value, ...)."""

    exit_code = 3


class NotFittedError(RegCalError, RuntimeError):
    """A calibrator was used before it was fitted."""

    exit_code = 2


class TrainingDivergedError(NumericalError):
    """
    Stochastic optimisation produced a non-finite objective.

    The calibrator restored to its last finite state is kept on the exception so
    callers may still persist or inspect it.
    """

    def __init__(self, message: str, calibrator: Any = None, epoch: Optional[int] = None):
        super().__init__(message)
        self.calibrator = calibrator
        self.epoch = epoch
