"""Exception hierarchy shared by all modules.

Two families matter to the command line: validation errors (bad input, exit
code 2) and solver errors (a numerical method failed, exit code 3).
"""

from __future__ import annotations


class PlateHomogError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(PlateHomogError, ValueError):
    """Input outside the documented domain of an operation."""


class SolverError(PlateHomogError, RuntimeError):
    """A numerical method failed to deliver a trustworthy answer."""


class SingularReduction(SolverError):
    """The normal equations of the plate reduction are singular."""


class SolverFailure(SolverError):
    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class NonConvergence(SolverError):
    def __init__(self, message: str, violation: float = float("nan")):
        super().__init__(f"{message} (constraint violation={violation:.3e})")
        self.violation = violation


class ZeroDirection(ValidationError):
    """Integer direction (0, 0) has no unit vector."""


class NotRankOne(ValidationError):
    """A bending tensor with non-vanishing determinant was supplied."""


class StepTooLarge(SolverError):
    """Frame drift in a single integration step exceeded the tolerance."""


class JacobianSignError(ValidationError):
    """The arm parametrisation folds over: 1 - s*kappa_gamma <= 0."""


class LevelTooDeep(ValidationError):
    """Cantor construction requested beyond the supported depth."""


class SqrtDomainError(ValidationError):
    """The corrected tangent is undefined because eps is too large."""


class ResolutionError(ValidationError):
    """A quadrature specification under-resolves the microstructure."""


class IncommensurateGrid(ValidationError):
    """The grid step does not divide the unfolding period."""


class DomainTooSmall(ValidationError):
    """Nothing is left of the domain after shrinking by the mollifier radius."""
