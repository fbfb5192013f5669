"""Exception types shared across the package."""


class EllipticityError(ValueError):
    """Diffusion coefficient is not strictly positive at a quadrature point.

    Carries the offending point in ``self.point``.
    """

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class SingularSystemError(RuntimeError):
    """Direct factorization and the iterative fallback both failed."""


class ConditioningError(RuntimeError):
    """Cholesky factorization failed even after the diagonal jitter.

    ``self.pivot`` holds the index of the failing pivot when known.
    """

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class NumericalBreakdownError(RuntimeError):
    """A local least-squares system was singular despite ridge regularization."""


class UnsupportedDimensionError(ValueError):
    """Requested dimension exceeds the embedded direction-number table."""


class CapacityError(ValueError):
    """Requested dense output exceeds the configured size cap."""


class UndefinedRelativeErrorError(ValueError):
    """Relative error is undefined because the reference has zero norm."""
