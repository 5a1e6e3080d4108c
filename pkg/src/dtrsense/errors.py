"""Exception hierarchy shared across the package."""


class DtrsenseError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(DtrsenseError):
    """Input arrays have inconsistent shapes."""


class SingularDesign(DtrsenseError):
    """A weighted design matrix is rank deficient at working tolerance."""


class SingleClass(DtrsenseError):
    """A binary response vector is constant, so no logistic fit exists."""


class SeparationDetected(DtrsenseError):
    """A logistic fit diverged with unbounded linear predictors."""


class DegenerateScore(DtrsenseError):
    """A propensity score of exactly 0 or 1 would produce an infinite weight."""


class DomainError(DtrsenseError):
    """A scalar argument lies outside its mathematical domain."""


class ResampleExhausted(DtrsenseError):
    """Too many bootstrap resamples failed; the retry budget is spent."""


class InsufficientB(DtrsenseError):
    """The bootstrap repetition count is too small for stable percentiles."""


class SchemaMismatch(DtrsenseError):
    """An input table does not provide the columns a model requires."""


class ConfigError(DtrsenseError):
    """A configuration file or option set failed validation."""
