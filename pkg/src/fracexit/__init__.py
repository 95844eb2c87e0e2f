"""Two-sided fractional boundary value problems on an interval and the exit statistics of the matching jump processes."""

__version__ = "0.1.0"

from .errors import ConfigError, DomainError, FracExitError, KernelError, QuadratureError, SolverError
from .kernel import KernelSpec, TwoSidedKernel, check_H0, check_H1
from .problem import DiffusionCoefficients, ProblemSpec

__all__ = [
    "ConfigError",
    "DiffusionCoefficients",
    "DomainError",
    "FracExitError",
    "KernelError",
    "KernelSpec",
    "ProblemSpec",
    "QuadratureError",
    "SolverError",
    "TwoSidedKernel",
    "check_H0",
    "check_H1",
]
