"""Dynamic treatment regime estimation via dynamic weighted OLS, with
Monte Carlo sensitivity analysis for an unmeasured confounder and
m-out-of-n bootstrap confidence intervals."""

__version__ = "0.1.0"

from . import confound, dwols, linmodel, mcsa, mnboot, simlab
from .errors import (
    ConfigError,
    DegenerateScore,
    DimensionMismatch,
    DomainError,
    DtrsenseError,
    InsufficientB,
    ResampleExhausted,
    SchemaMismatch,
    SeparationDetected,
    SingleClass,
    SingularDesign,
)

__all__ = [
    "linmodel",
    "dwols",
    "confound",
    "mcsa",
    "mnboot",
    "simlab",
    "DtrsenseError",
    "DimensionMismatch",
    "SingularDesign",
    "SingleClass",
    "SeparationDetected",
    "DegenerateScore",
    "DomainError",
    "ResampleExhausted",
    "InsufficientB",
    "SchemaMismatch",
    "ConfigError",
    "__version__",
]
