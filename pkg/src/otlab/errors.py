"""Exception hierarchy shared by all otlab modules."""


class OTLabError(Exception):
    """Base class for every error raised by otlab."""


class ConfigError(OTLabError, ValueError):
    pass


class InvalidMeasure(OTLabError, ValueError):
    pass


class DimensionError(OTLabError, ValueError):
    pass


class SupportError(OTLabError, ValueError):
    pass


class PartitionError(OTLabError, ValueError):
    pass


class NotApplicable(OTLabError, ValueError):
    """Raised when a quantity is undefined for the requested exponent."""


class SolverError(OTLabError, RuntimeError):
    pass


class NumericsError(OTLabError, RuntimeError):
    pass


class FitError(OTLabError, ValueError):
    pass


class NonConvergence(SolverError):
    """The dual solver hit ``max_iters``; ``residual`` and ``partial`` carry what was reached."""

    def __init__(self, message, residual=float("nan"), partial=None):
        super().__init__(message)
        self.residual = residual
        self.partial = partial
