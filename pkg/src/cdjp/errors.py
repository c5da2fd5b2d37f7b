"""Exception types raised across the package."""


class CDJPError(Exception):
    """Base class; the CLI maps any subclass to a non-zero exit code."""


class TruncationLeak(CDJPError):
    pass


class DimensionMismatch(CDJPError):
    pass


class PositivityLoss(CDJPError):
    """Raised when a stepped state acquires a negative eigenvalue.

    ``step`` is filled in by trajectory drivers so the failing index
    travels with the exception.
    """

    def __init__(self, message, min_eigenvalue=None, step=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue
        self.step = step


class GaugeViolation(CDJPError):
    pass


class AnharmonicNotClosed(CDJPError):
    pass


class NonPureInput(CDJPError):
    pass


class SingularMatrix(CDJPError):
    pass


class ConfigError(CDJPError):
    pass
