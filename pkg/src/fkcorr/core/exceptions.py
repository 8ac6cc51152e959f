"""Exception hierarchy.

Each error carries the process exit code the CLI reports for it:
``1`` for residual or tolerance failures, ``2`` for usage and input errors.
"""

from __future__ import annotations


class FkcorrError(Exception):
    """Base class for every error raised by fkcorr."""

    exit_code: int = 2


class InvalidGeometryError(FkcorrError):
    """A domain description is degenerate, disconnected or not simply connected."""


class InvalidMarkingError(FkcorrError):
    """Marked boundary points are missing, repeated or not on the boundary."""


class InvalidPointError(FkcorrError):
    """A query point is not a vertex of the domain."""


class UndefinedEventError(FkcorrError):
    """An event cannot be evaluated because one of its vertex sets is empty."""


class CapacityError(FkcorrError):
    """An exact enumeration or combinatorial request exceeds its size cap."""


class InvalidMatrixError(FkcorrError):
    """A matrix is not square, of odd dimension or not antisymmetric."""


class OrderingError(FkcorrError):
    """Boundary points are not strictly increasing."""


class SingularInputError(FkcorrError):
    """Coincident points or a map pole make a formula undefined."""


class DomainError(FkcorrError):
    """A point lies outside the domain of a continuum formula."""


class ConditioningError(FkcorrError):
    """Points are too close for the requested finite-difference step."""


class ConfigurationError(FkcorrError):
    """An experiment configuration is invalid or inconsistent."""


class InsufficientDataError(FkcorrError):
    """Too few samples, batches or geometries for an estimate."""


class LogDomainError(FkcorrError):
    """A non-positive value was passed to a log-log fit."""


class FormulaError(FkcorrError):
    """An unknown correlation formula family or malformed parameters."""


class ToleranceError(FkcorrError):
    """A verification residual exceeds its tolerance."""

    exit_code = 1


class InternalInvariantError(FkcorrError):
    """An internal consistency check failed; indicates a bug."""

    exit_code = 1
