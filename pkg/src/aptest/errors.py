"""Exception types raised across the package."""


class AptestError(Exception):
    """Base class for every error raised by aptest."""


class BadParams(AptestError, ValueError):
    """A tester or estimator was configured outside its domain."""


class BadDistribution(AptestError, ValueError):
    pass


class BadSimplex(AptestError, ValueError):
    """Bin masses are negative or do not sum to one."""


class DimMismatch(AptestError, ValueError):
    pass


class UnknownPoint(AptestError, KeyError):
    """A label was requested for a point the oracle never handed out.

    In the active model labels may only be requested on drawn points, so
    this always indicates a bug in the caller.
    """


class SampleBudgetExceeded(AptestError):
    pass


class SubTesterFailure(AptestError):
    def __init__(self, bin_id, cause):
        super().__init__(f"sub-tester for bin {bin_id} failed: {cause!r}")
        self.bin_id = bin_id
        self.cause = cause


class RegionBlowup(AptestError):
    pass


class NeighborhoodStarved(AptestError):
    pass


class TooManyQueries(AptestError):
    pass


class InsufficientTrials(AptestError):
    pass


class SearchBudget(AptestError):
    pass


class SingularCovariance(AptestError, ValueError):
    pass


class GenerationFailed(AptestError):
    pass


class EmptyInput(AptestError, ValueError):
    pass


class TrialFailed(AptestError):
    def __init__(self, trial, cause):
        super().__init__(f"trial {trial} failed: {cause!r}")
        self.trial = trial
        self.cause = cause
