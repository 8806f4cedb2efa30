"""Exception and warning types shared across the package."""


class InputDomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class DegenerateMeasureError(ValueError):
    """A measure has no usable mass (zero total mass, or every node excluded)."""


class NonNormalizableError(ValueError):
    """A surrogate density does not decay inside the truncated grid."""


class NumericalDomainError(ArithmeticError):
    """A closed-form evaluation hit a singular or otherwise invalid value."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before meeting its tolerance."""

    def __init__(self, message, residual, n_iter):
        super().__init__(f"{message} (residual={residual:.3e} after {n_iter} iterations)")
        self.residual = residual
        self.n_iter = n_iter


class BlowUpError(RuntimeError):
    """A simulated trajectory produced a non-finite state."""

    def __init__(self, message, step):
        super().__init__(f"{message} at step {step}")
        self.step = step


class EstimationError(RuntimeError):
    """A Monte Carlo estimate is unusable (e.g. non-positive mean before a log)."""


class RateFitError(ValueError):
    """Too few valid points survive to fit a log-log rate."""


class TruncationWarning(UserWarning):
    """Density at the grid boundary is not negligible relative to its peak."""


class ExtrapolationWarning(UserWarning):
    """A map was evaluated outside the grid it was tabulated on."""
