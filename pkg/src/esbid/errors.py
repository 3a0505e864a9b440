"""Exception types raised across the package."""


class EsbidError(Exception):
    """Base class for all package errors."""


class ConfigurationError(EsbidError, ValueError):
    """Invalid bounds, hyperparameters or run configuration."""


class UsageError(EsbidError, ValueError):
    """A function was called with arguments that break its contract."""


class ConditioningError(EsbidError, ArithmeticError):
    """The Kriging correlation matrix could not be factorized."""


class InfeasibleError(EsbidError):
    """The market clearing problem has no feasible dispatch."""


class EvaluationError(EsbidError):
    """An objective evaluation failed during an optimization run.

    Carries the failing point and the trace recorded up to the failure.
    """

    def __init__(self, message, point=None, trace=None):
        super().__init__(message)
        self.point = point
        self.trace = trace
