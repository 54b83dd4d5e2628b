"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented invariant (unit norm, orthogonality, ...)."""


class ChartDomainError(ValueError):
    """Point lies at (or too close to) the excluded pole of a chart."""


class UnsupportedOrderError(ValueError):
    """Requested C^r norm order is not implemented."""


class PreconditionError(ValueError):
    """An operation was called outside its precondition.

    ``residual`` carries the measured quantity that failed the check, when one exists.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class FixedPointNotFound(RuntimeError):
    def __init__(self, message, best_residual, best_point=None):
        super().__init__(message)
        self.best_residual = best_residual
        self.best_point = best_point


class DensityError(ValueError):
    """Metric interpolation target is too far from every field sample."""


class TruncatedBallError(RuntimeError):
    """A word ball hit the element cap and cannot be used where completeness matters."""
