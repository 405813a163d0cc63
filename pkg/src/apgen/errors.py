"""Exception hierarchy shared across the package."""


class ApgenError(Exception):
    """Base class for all errors raised by this package."""


class NotSymmetric(ApgenError, ValueError):
    pass


class DimensionMismatch(ApgenError, ValueError):
    pass


class NotFactorizable(ApgenError, ArithmeticError):
    """Raised when the jitter ladder is exhausted without a valid Cholesky factor.

    Downstream code treats this as a degenerate (non-PSD) covariance.
    """


Degenerate = NotFactorizable


class ConfigInvalid(ApgenError, ValueError):
    pass


class InvalidBatchSize(ConfigInvalid):
    pass


class EmptySegment(ApgenError, ValueError):
    pass


class NonMonotoneTime(ApgenError, ValueError):
    pass


class TooFewRepetitions(ApgenError, ValueError):
    pass


class GridTooLarge(ConfigInvalid):
    pass


class FormatError(ApgenError, ValueError):
    """Malformed dataset file. ``line`` and ``column`` are 1-based when known."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
