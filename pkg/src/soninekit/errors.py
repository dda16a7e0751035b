"""Exception hierarchy shared by all soninekit modules."""


class SonineKitError(Exception):
    """Base class for library errors."""


class DomainError(SonineKitError, ValueError):
    """An argument lies outside the domain of an operation."""


class UnsupportedError(SonineKitError, NotImplementedError):
    """The requested operation is not available for this input."""


class HypothesisViolation(SonineKitError):
    """A structural hypothesis (positivity, invertibility, singularity) fails.

    Raised when a convolution problem is ill-posed: a direction in which the
    kernel vanishes identically, a non-invertible limit at zero, or a step
    matrix whose condition number exceeds the configured bound.
    """


class NonContractionError(SonineKitError):
    """Fixed-point iteration failed to contract."""
