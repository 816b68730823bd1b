"""Exception types shared across the package.

Each class maps to one process exit code in the command-line interface:
structural problems (bad inputs, malformed files, invalid configuration)
exit 1, capacity refusals exit 2, numerical estimation failures exit 3.
"""
from __future__ import annotations


class TwoStageError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class StructuralError(TwoStageError):
    """Invalid design, data, weights, or configuration."""

    exit_code = 1


class ParseError(StructuralError):
    """Malformed input file.

    Parameters
    ----------
    message : str
        Description of the problem.
    line : int, optional
        1-based line number in the offending file, when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CapacityError(TwoStageError):
    """A requested exact computation exceeds the configured size cap."""

    exit_code = 2


class EstimationError(TwoStageError):
    """Estimation failed numerically (degenerate cell, singular system, ...)."""

    exit_code = 3
