"""Exception hierarchy shared by all tomobench modules."""


class TomoError(Exception):
    """Base class for every error raised by tomobench."""


class InvalidInputError(TomoError, ValueError):
    """An argument violates a documented precondition."""


class NumericalFailureError(TomoError, ArithmeticError):
    """A LAPACK routine (SVD, eigendecomposition) did not converge."""


class DegenerateMeasurementError(TomoError):
    """A ket family whose frame operator is rank deficient."""


class DegenerateProjectionError(TomoError):
    """A Hermitian matrix with no positive spectrum to project onto."""


class SingularStatisticsError(TomoError):
    """Outcome probabilities too small for the Fisher weights 1/p_j."""


class InformationallyIncompleteError(TomoError):
    """The Fisher matrix is singular, so no finite CRLB exists."""


class SamplingExhaustedError(TomoError):
    """Rejection sampling hit its attempt budget without acceptance."""

    def __init__(self, message, attempts=0, observed_range=(float("nan"), float("nan"))):
        super().__init__(message)
        self.attempts = attempts
        self.observed_range = observed_range


class TrialFailure(TomoError):
    """Wraps an error raised inside a Monte Carlo trial with its index."""

    def __init__(self, trial_index, cause):
        super().__init__(f"trial {trial_index} failed: {cause}")
        self.trial_index = trial_index
        self.cause = cause
