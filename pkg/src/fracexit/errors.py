"""Exception hierarchy shared by all solver modules."""


class FracExitError(Exception):
    """Base class for every error raised by :mod:`fracexit`."""


class DomainError(FracExitError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class KernelError(FracExitError):
    """A jump kernel is malformed or one of its integrals diverges."""


class QuadratureError(FracExitError):
    """Adaptive quadrature did not reach the requested tolerance."""


class ConfigError(FracExitError, ValueError):
    """A problem or run configuration violates its schema or invariants.

    ``path`` names the offending field, e.g. ``"problem.kernel.beta"``.
    """

    def __init__(self, message: str, path: str = ""):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


class SolverError(FracExitError):
    """A discrete linear system could not be solved reliably."""

    def __init__(self, message: str, condition: float | None = None):
        self.condition = condition
        super().__init__(message)


class ReducedAccuracyWarning(UserWarning):
    """Finite differences replaced a missing analytic derivative."""
