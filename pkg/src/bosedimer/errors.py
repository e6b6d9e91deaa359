"""Exception types shared across the package."""


class BoseDimerError(Exception):
    """Base class for all package-specific errors."""


class SolverError(BoseDimerError):
    """A linear or eigenvalue solve failed to reach the requested residual.

    Carries the achieved residual and the tolerance that was violated so
    callers can report how far off the solve was.
    """

    def __init__(self, message, residual=None, tol=None):
        if residual is not None and tol is not None:
            message = f"{message} (residual {residual:.3e}, tolerance {tol:.3e})"
        super().__init__(message)
        self.residual = residual
        self.tol = tol


class IntegrityError(BoseDimerError):
    """A computed object violates a structural invariant (positivity, trace,
    normalizability) beyond tolerance."""


class StepSizeError(BoseDimerError):
    """A fixed-step integration accumulated more conserved-quantity drift
    than the caller allowed; re-run with a smaller dt."""


class PoleError(BoseDimerError):
    """Spherical-angle equations evaluated too close to a coordinate pole."""


class BracketError(BoseDimerError):
    """A bisection bracket does not actually straddle the sought change."""
