"""Exception types raised by the crda package."""


class CrdaError(ValueError):
    """Base class for all computational errors raised by crda."""


class DegenerateClassError(CrdaError):
    pass


class InsufficientSamplesError(CrdaError):
    pass


class SingularTargetError(CrdaError):
    pass


class ConvergenceError(CrdaError):
    """An iterative solver stopped before meeting its tolerance.

    ``last_iterate`` holds whatever the solver had when it gave up so the
    caller can inspect or reuse it.
    """

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class FormatError(CrdaError):
    """Malformed dataset, mask or model file."""
