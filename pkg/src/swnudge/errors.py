"""Exception hierarchy shared by all swnudge modules."""


class SwnudgeError(Exception):
    """Base class for every error raised by the package."""


class InvalidGridError(SwnudgeError, ValueError):
    pass


class UnsupportedTransformError(SwnudgeError, ValueError):
    pass


class InvalidArgumentError(SwnudgeError, ValueError):
    pass


class GridMismatchError(SwnudgeError, ValueError):
    pass


class StateInvalidError(SwnudgeError, ValueError):
    """Raised when a flow state leaves its physical domain (h <= 0, NaN, ...)."""


class CFLError(SwnudgeError, ValueError):
    pass


class NumericalFailureError(SwnudgeError, RuntimeError):
    pass


class AbortedRunError(NumericalFailureError):
    """A twin run diverged.  ``who`` is ``"truth"`` or ``"observer"``."""

    def __init__(self, message, step, who):
        super().__init__(message)
        self.step = step
        self.who = who


class AssumptionViolatedError(SwnudgeError, ValueError):
    """A gain Fourier coefficient is not strictly positive."""

    def __init__(self, message, mode=None):
        super().__init__(message)
        self.mode = mode


class InvalidTuningError(SwnudgeError, ValueError):
    pass


class UndefinedMetricError(SwnudgeError, ZeroDivisionError):
    pass


class ConfigError(SwnudgeError, ValueError):
    pass
