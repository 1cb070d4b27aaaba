"""Exception types shared across the toolkit."""


class DimensionMismatch(ValueError):
    """Input dimensions do not match what an operator expects."""

    def __init__(self, what, expected, actual):
        super().__init__(f"{what}: expected {expected}, got {actual}")
        self.expected = expected
        self.actual = actual


class ParameterError(ValueError):
    """An argument violates a documented precondition."""


class NetworkParseError(ValueError):
    """A network weight file is malformed."""


class ConfigError(ValueError):
    """A problem/experiment configuration file is invalid."""


class ConvergenceError(RuntimeError):
    """An iterative solver exhausted its budget.

    Carries the residual history so callers can inspect the stall.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class TruncationExceeded(RuntimeError):
    """A truncated state solve produced a state beyond the truncation level."""

    def __init__(self, linf, level):
        super().__init__(
            f"state sup-norm {linf:.6g} reached the truncation level {level:.6g}; "
            f"rerun with a larger truncation_level"
        )
        self.linf = linf
        self.level = level
