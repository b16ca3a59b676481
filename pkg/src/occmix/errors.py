"""Exception types raised by occmix."""


class OccmixError(Exception):
    """Base class for all occmix errors."""


class DomainError(OccmixError, ValueError):
    """A parameter or argument lies outside its valid domain."""


class DegenerateData(OccmixError):
    """The data carry no detections, so abundance cannot be estimated."""


class NonConvergence(OccmixError):
    """Every optimizer start failed to produce a finite likelihood."""


class InvalidStatistic(OccmixError):
    """Closed-form estimator preconditions are violated by the data."""


class NoRoot(OccmixError):
    """A moment equation has no solution in the admissible interval."""


class SingularInformation(OccmixError):
    """The observed information matrix is not positive definite."""


class NotNested(OccmixError):
    """Two models do not form a declared null/alternative pair."""
