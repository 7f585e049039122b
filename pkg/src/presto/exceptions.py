"""Exception and warning types raised across the package."""


class PrestoError(Exception):
    """Base class for errors raised by this package."""


class InfeasibleProbabilities(PrestoError, ValueError):
    """Decision boundaries cross at a queried point, so some class probability is <= 0."""

    def __init__(self, message, rows=None):
        super().__init__(message)
        self.rows = rows


class NotDifferentiable(PrestoError, ValueError):
    pass


class InfeasibleStart(PrestoError, ValueError):
    pass


class DegenerateData(PrestoError, ValueError):
    pass


class NoValidLambda(PrestoError, RuntimeError):
    pass


class FoldAssignmentError(PrestoError, RuntimeError):
    pass


class FeasibilityRetriesExhausted(PrestoError, RuntimeError):
    pass


class SplitRetriesExhausted(PrestoError, RuntimeError):
    pass


class ExperimentAborted(PrestoError, RuntimeError):
    pass


class DidNotConverge(UserWarning):
    """Solver hit its iteration cap or step floor; the returned fit is flagged."""


class Separation(UserWarning):
    """Coefficients diverge, i.e. the binary labels are (quasi-)separable."""
