"""Exceptions and warning categories shared across the package."""


class ShapeError(ValueError):
    """Inputs have incompatible or invalid dimensions."""


class NumericOverflowError(ArithmeticError):
    """A natural parameter is non-finite or an intensity would overflow.

    Carries the (t, i, j) index of the first offending entry when known.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConditioningError(RuntimeError):
    """A linear system required by an estimator is numerically singular."""

    def __init__(self, message, block=None, eig_min=None):
        super().__init__(message)
        self.block = block
        self.eig_min = eig_min


class ConvergenceError(RuntimeError):
    """An iterative solver failed to make progress.

    The ``trace`` attribute holds the objective values seen so far.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class RankError(ValueError):
    """A matrix does not have the rank required by the requested operation."""


class IngestError(ValueError):
    """Event-log ingestion produced no usable data."""


class NumericsWarning(UserWarning):
    """Non-fatal numerical events: clamped exponents, ridge rescues, and
    degenerate inputs handled by a fallback branch."""
