"""Exception types raised across the package."""


class PreconditionError(ValueError):
    """An input violates a documented precondition (shape, sign, structure)."""


class UnstableError(PreconditionError):
    """A linear map that must be Schur stable has spectral radius >= 1."""


class ConvergenceError(RuntimeError):
    """An iterative routine failed to reach its tolerance."""


class MonotonicityError(RuntimeError):
    """The Riccati iterates stopped increasing along a monotone solve."""
