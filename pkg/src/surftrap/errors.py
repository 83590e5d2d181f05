"""Exception and warning types shared across the package."""

from __future__ import annotations


class TrapModelError(Exception):
    """Base class for all surftrap errors."""


class InvalidParameterError(TrapModelError, ValueError):
    """Bad user input: non-positive dimension, unknown electrode id, ..."""


class OutOfDomainError(TrapModelError, ValueError):
    """Field evaluation requested at or below the electrode plane (y <= 0)."""


class SearchFailedError(TrapModelError, RuntimeError):
    """Iterative search did not converge. Carries the best iterate found."""

    def __init__(self, message, best_point_um=None, residual=None):
        super().__init__(message)
        self.best_point_um = best_point_um
        self.residual = residual


class NoEscapePointError(TrapModelError, RuntimeError):
    """No escape saddle found within the search region."""


class NotAMinimumError(TrapModelError, ValueError):
    """Hessian at the supplied point has a non-positive eigenvalue."""

    def __init__(self, message, axis=None):
        super().__init__(message)
        self.axis = axis


class BoundViolationError(TrapModelError, ValueError):
    """A voltage solve left the allowed bounds. Lists the worst electrodes."""

    def __init__(self, message, electrodes=()):
        super().__init__(message)
        self.electrodes = tuple(electrodes)


class InfeasibleTargetError(TrapModelError, ValueError):
    """Requested target cannot be met (resource solve, shift, optimizer)."""


class ZeroBaselineError(TrapModelError, ValueError):
    """Gradiometer pair with coincident zones."""


class DegenerateAxesWarning(UserWarning):
    """Radial curvatures are degenerate; principal-axis angle is ill-defined."""
