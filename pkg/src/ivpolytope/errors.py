"""Semantic exception hierarchy shared across the package."""


class IvPolytopeError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(IvPolytopeError):
    """An input's shape or length disagrees with the declared dimensions."""


class ZeroArm(IvPolytopeError):
    """An instrument arm with zero observations was requested for inference."""


class SizeOverflow(IvPolytopeError):
    """A requested enumeration exceeds its configured size cap."""


class LpFailure(IvPolytopeError):
    """The linear-programming kernel ended in an unexpected state."""

    def __init__(self, status: str, message: str = ""):
        self.status = status
        super().__init__(message or f"LP solver failure: {status}")


class NoConvergence(IvPolytopeError):
    """An iterative search failed to converge within its budget."""


class DomainError(IvPolytopeError):
    """A numeric argument lies outside its mathematical domain."""
