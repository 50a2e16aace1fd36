"""Exception hierarchy shared by every module of the package."""


class AflowsError(Exception):
    """Base class for all errors raised by :mod:`aflows`."""


class InvalidInputError(AflowsError, ValueError):
    pass


class OutOfDomainError(AflowsError, ValueError):
    """A point was handed to a chart (or chart transition) that does not contain it."""

    def __init__(self, message, source=None, target=None):
        super().__init__(message)
        self.source = source
        self.target = target


class ConfigurationError(AflowsError, ValueError):
    """A construction was configured with parameters violating its invariants."""

    def __init__(self, message, failed=()):
        super().__init__(message)
        self.failed = tuple(failed)


class EquivarianceError(ConfigurationError):
    def __init__(self, message, witness=None):
        super().__init__(message, failed=("equivariance",))
        self.witness = witness


class ExcisionError(AflowsError):
    def __init__(self, message, sample=None, margin=None):
        super().__init__(message)
        self.sample = sample
        self.margin = margin


class GluingError(AflowsError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class EscapeError(AflowsError):
    """An orbit left every chart of its system; ``last_state`` is the last valid point."""

    def __init__(self, message, last_state=None, time=None):
        super().__init__(message)
        self.last_state = last_state
        self.time = time


class NumericalOverflowError(AflowsError, FloatingPointError):
    pass


class NoReturnError(AflowsError):
    pass
