"""Exception types raised by the precoder solvers."""


class PrecoderError(Exception):
    """Base class for all errors raised by this package."""


class InvalidScenario(PrecoderError, ValueError):
    """A scenario or configuration value is out of range."""


class InfeasibleZf(PrecoderError):
    """The zero-forcing null space is too small to carry the requested streams."""


class NotPositiveDefinite(PrecoderError):
    """A matrix that must be positive definite is not."""


class IllConditioned(PrecoderError):
    """A matrix required to be invertible is numerically singular."""


class SingularKkt(PrecoderError):
    """The reduced Newton system could not be solved reliably."""


class LineSearchStalled(PrecoderError):
    """Backtracking shrank the step below the floor without progress.

    The partially filled convergence trace is attached as ``trace``.
    """

    def __init__(self, message, trace=None, iterate=None):
        super().__init__(message)
        self.trace = trace
        self.iterate = iterate


class MaxIterations(PrecoderError):
    """An iteration cap was hit before the tolerances were met."""

    def __init__(self, message, trace=None, iterate=None):
        super().__init__(message)
        self.trace = trace
        self.iterate = iterate


class SizeGuard(PrecoderError):
    """Problem too large for the dense reference solver."""


class FailureBudgetExceeded(PrecoderError):
    """More than the allowed fraction of Monte-Carlo trials failed.

    The aggregated table (with the failure counts) is attached as ``table``.
    """

    def __init__(self, message, table=None):
        super().__init__(message)
        self.table = table


class ConfigError(PrecoderError, ValueError):
    """A configuration file or command-line override is malformed."""
