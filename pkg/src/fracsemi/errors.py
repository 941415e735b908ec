"""Exception hierarchy shared by all modules."""
from __future__ import annotations

from typing import Any


class FracSemiError(Exception):
    """Base class for every error raised by the package."""

    exit_code = 3

    def __init__(self, message: str, *, field: str | None = None, payload: Any = None):
        super().__init__(message)
        self.field = field
        self.payload = payload

    def to_dict(self) -> dict:
        out = {"error": type(self).__name__, "message": str(self)}
        if self.field is not None:
            out["field"] = self.field
        return out


class ConfigurationError(FracSemiError, ValueError):
    """Invalid parameters or configuration."""

    exit_code = 2


class DomainError(FracSemiError, ValueError):
    """A point lies outside the admissible set."""

    exit_code = 2


class ResolutionError(FracSemiError):
    """The mesh or quadrature cannot resolve the requested quantity."""


class NumericalError(FracSemiError, ArithmeticError):
    """Non-finite intermediate values or failed quadrature."""


class ConvergenceError(FracSemiError):
    """An iterative solver did not converge; ``payload`` holds the best iterate."""


class BranchError(ConvergenceError):
    """Continuation could not leave the starting point."""


class SaddleNotFoundError(ConvergenceError):
    """Mountain-pass deformation stagnated; ``payload`` holds the path profile."""
