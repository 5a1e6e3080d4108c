"""Posited unmeasured-confounder model and the plug-in bias estimate.

The confounder is never observed. Its conditional mean given the full
history and final treatment is posited as a linear predictor over named
columns, either directly (continuous confounder, identity link) or through
an inverse logit (binary confounder). Imputing that mean and regressing it
against a stage design yields the blip-coefficient bias induced by omitting
the confounder from the outcome model; subtracting it gives the adjusted
coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dwols import Panel, design_matrix
from .errors import DimensionMismatch, DomainError
from .linmodel import expit, wls_multi


class Link(Enum):
    IDENTITY = "identity"  # continuous confounder: mean is the linear predictor
    LOGIT = "logit"  # binary confounder: mean is a probability


@dataclass(frozen=True)
class ConfounderSpec:
    """Mean model for the confounder given history and final treatment.

    terms name observable columns (treatments allowed); the intercept is
    implied. zeta are the mean-model coefficients (length len(terms) + 1)
    and beta_u is the confounder's additive effect on the outcome.
    """

    terms: tuple[str, ...]
    link: Link
    zeta: np.ndarray
    beta_u: float

    def __post_init__(self):
        zeta = np.asarray(self.zeta, dtype=float)
        object.__setattr__(self, "zeta", zeta)
        if zeta.shape != (len(self.terms) + 1,):
            raise DimensionMismatch(
                f"zeta has length {zeta.shape[0]}, want {len(self.terms) + 1} "
                "(intercept plus one per term)"
            )


@dataclass(frozen=True)
class NormalPrior:
    """Independent normal distribution for one bias parameter.

    Zero variance is allowed and denotes a point mass, used to switch the
    adjustment off (or pin a parameter) exactly.
    """

    mean: float
    variance: float

    def __post_init__(self):
        if self.variance < 0:
            raise DomainError("prior variance must be non-negative")

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.normal(self.mean, np.sqrt(self.variance)))


@dataclass(frozen=True)
class PriorSpec:
    """Priors for the mean-model coefficients and the outcome effect."""

    zeta: tuple[NormalPrior, ...]
    beta_u: NormalPrior

    def sample(self, rng: np.random.Generator) -> tuple[np.ndarray, float]:
        """Draw (zeta, beta_u); the draw order is fixed for reproducibility."""
        zeta = np.array([p.sample(rng) for p in self.zeta])
        return zeta, self.beta_u.sample(rng)

    @property
    def degenerate_no_confounding(self) -> bool:
        """True when beta_u is a point mass at zero, so adjustment vanishes."""
        return self.beta_u.variance == 0.0 and self.beta_u.mean == 0.0


def impute_values(u_design: np.ndarray, zeta: np.ndarray, link: Link) -> np.ndarray:
    """Imputed confounder means from a prebuilt design matrix."""
    zeta = np.asarray(zeta, dtype=float)
    if u_design.shape[1] != zeta.shape[0]:
        raise DimensionMismatch(
            f"confounder design has {u_design.shape[1]} columns but zeta has {zeta.shape[0]}"
        )
    lp = u_design @ zeta
    return expit(lp) if link is Link.LOGIT else lp


def impute(panel: Panel, spec: ConfounderSpec) -> np.ndarray:
    """Imputed confounder mean per patient under the posited model."""
    return impute_values(design_matrix(panel, spec.terms), spec.zeta, spec.link)


def bias_hat(
    h_tf: np.ndarray,
    h_blip: np.ndarray,
    a: np.ndarray,
    w: np.ndarray,
    u_hat: np.ndarray,
    beta_u: float,
) -> np.ndarray:
    """Plug-in estimate of the blip-coefficient bias from the omitted confounder.

    Equal to the blip block of a weighted regression of beta_u * u_hat on
    [treatment-free design, a * blip design]; algebraically identical to the
    moment-matrix form (the blip block of the regression of the outcome
    minus the blip block of the regression of the outcome with the
    confounder signal removed), but computed in one solve.
    """
    a = np.asarray(a, dtype=float)
    u_hat = np.asarray(u_hat, dtype=float)
    if not (h_tf.shape[0] == h_blip.shape[0] == a.shape[0] == u_hat.shape[0]):
        raise DimensionMismatch("stage design, treatment, and u_hat rows disagree")
    design = np.hstack([h_tf, a[:, None] * h_blip])
    coef = wls_multi(design, beta_u * u_hat, w)
    return coef[h_tf.shape[1]:, 0]


def adjust(psi: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Bias-adjusted coefficients: psi minus the estimated bias."""
    psi = np.asarray(psi, dtype=float)
    bias = np.asarray(bias, dtype=float)
    if psi.shape != bias.shape:
        raise DimensionMismatch("psi and bias have different shapes")
    return psi - bias
