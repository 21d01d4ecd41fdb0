class SubdetectError(Exception):
    """Base class for every error raised by subdetect."""


class ConfigError(SubdetectError):
    pass


class ParameterError(SubdetectError):
    """A precondition on sizes, indices or parameters does not hold."""


class QuantizationOverflow(SubdetectError):
    pass


class BudgetExceeded(SubdetectError):
    """The requested exact computation is larger than the configured budget."""


class CoinsExhausted(SubdetectError):
    pass


class SamplingError(SubdetectError):
    pass


class ConvergenceError(SubdetectError):
    pass


class FormatError(SubdetectError):
    pass


class ReductionWarning(UserWarning):
    """A relaxed precondition of the reduction was accepted."""
