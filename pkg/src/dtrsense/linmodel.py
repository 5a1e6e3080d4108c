"""Weighted linear and logistic regression kernels.

Deterministic building blocks used by every estimator in the package:
weighted least squares via a rank-revealing solve, maximum-likelihood
logistic regression via iteratively reweighted least squares, balancing
weights for binary treatments, and the chi-square quantile used by the
non-regularity pretest.

All functions are pure and thread-safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg
from scipy.special import ndtri

from .errors import (
    DegenerateScore,
    DimensionMismatch,
    DomainError,
    SeparationDetected,
    SingleClass,
    SingularDesign,
)

# Default tolerances; every public function accepts overrides.
RCOND_MIN = 1e-12  # reciprocal condition number of X'WX below this is singular
SCORE_TOL = 1e-6  # max-abs logistic score at convergence
MAX_ITER = 100  # IRLS iteration cap
RIDGE = 1e-10  # working-Hessian ridge used to survive quasi-separation
ETA_MAX = 30.0  # linear predictors are clipped here inside IRLS


class WeightScheme(Enum):
    """Balancing weight families for binary treatments."""

    IPTW = "iptw"
    OVERLAP = "overlap"


@dataclass
class FitResult:
    """Coefficients plus solver diagnostics."""

    coefficients: np.ndarray
    converged: bool = True
    iterations: int = 0
    ridged: bool = False


def expit(eta: np.ndarray) -> np.ndarray:
    """Inverse logit; exp overflow saturates to the correct limit 0."""
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-np.asarray(eta, dtype=float)))


def _as_2d(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[:, None]
    return x


def wls_multi(x: np.ndarray, ys: np.ndarray, w: np.ndarray, rcond_min: float = RCOND_MIN) -> np.ndarray:
    """Solve one weighted least-squares design against several responses.

    Parameters
    ----------
    x : (n, p) design matrix.
    ys : (n,) or (n, m) response column(s).
    w : (n,) non-negative weights with positive sum.
    rcond_min : singularity threshold on the reciprocal condition number
        of X'WX.

    Returns
    -------
    (p, m) coefficient matrix, one column per response.

    Raises
    ------
    DimensionMismatch, SingularDesign
    """
    x = np.asarray(x, dtype=float)
    ys = _as_2d(ys)
    w = np.asarray(w, dtype=float)
    n, p = x.shape
    if ys.shape[0] != n or w.shape != (n,):
        raise DimensionMismatch(
            f"design has {n} rows but responses have {ys.shape[0]} and weights {w.shape}"
        )
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise DomainError("weights must be finite and non-negative")
    if w.sum() <= 0:
        raise DomainError("weights must have positive sum")
    sw = np.sqrt(w)[:, None]
    # rcond(X'WX) = rcond(sqrt(W)X)^2, so the cutoff on singular values of
    # the scaled design is sqrt(rcond_min).
    coef, _, rank, _ = scipy.linalg.lstsq(
        x * sw, ys * sw, cond=np.sqrt(rcond_min), lapack_driver="gelsy"
    )
    if rank < p:
        raise SingularDesign(
            f"weighted design is rank {rank} < {p} at rcond threshold {rcond_min:g}"
        )
    return coef


def wls(x: np.ndarray, y: np.ndarray, w: np.ndarray, rcond_min: float = RCOND_MIN) -> FitResult:
    """Weighted least squares: argmin_b sum_i w_i (y_i - x_i'b)^2.

    The solution satisfies the weighted normal equations X'W(y - Xb) = 0 to
    working precision. Raises SingularDesign when X'WX has reciprocal
    condition number below ``rcond_min``.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise DimensionMismatch("y must be a vector")
    coef = wls_multi(x, y, w, rcond_min=rcond_min)
    return FitResult(coefficients=coef[:, 0])


def logistic_fit(
    x: np.ndarray,
    a: np.ndarray,
    score_tol: float = SCORE_TOL,
    max_iter: int = MAX_ITER,
    ridge: float = RIDGE,
) -> FitResult:
    """Maximum-likelihood logistic regression of a binary vector on a design.

    Fits by iteratively reweighted least squares starting from zero
    coefficients. Convergence means the score vector X'(a - pi) has max-abs
    at most ``score_tol``. A non-converged fit is returned with
    ``converged=False`` unless the linear predictor exceeds ``ETA_MAX`` in
    absolute value, which raises SeparationDetected. A singular working
    Hessian is retried once per iteration with ``ridge`` added to its
    diagonal and flagged on the result.
    """
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    n, p = x.shape
    if a.shape != (n,):
        raise DimensionMismatch(f"design has {n} rows but response has shape {a.shape}")
    if not np.all((a == 0.0) | (a == 1.0)):
        raise DomainError("response must be binary 0/1")
    if a.min() == a.max():
        raise SingleClass("response vector is constant")

    beta = np.zeros(p)
    ridged = False
    eta = np.zeros(n)
    for it in range(1, max_iter + 1):
        eta = x @ beta
        pi = expit(np.clip(eta, -ETA_MAX, ETA_MAX))
        score = x.T @ (a - pi)
        if np.max(np.abs(score)) <= score_tol:
            # A near-zero score with unbounded predictors means the
            # likelihood sup is at infinity: separation, not convergence.
            if np.max(np.abs(eta)) > ETA_MAX:
                raise SeparationDetected(
                    f"score converged with |linear predictor| > {ETA_MAX}"
                )
            return FitResult(beta, converged=True, iterations=it, ridged=ridged)
        wk = pi * (1.0 - pi)
        hess = (x * wk[:, None]).T @ x
        try:
            step = np.linalg.solve(hess, score)
            if not np.all(np.isfinite(step)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            ridged = True
            step = np.linalg.solve(hess + ridge * np.eye(p), score)
        beta = beta + step

    if np.max(np.abs(eta)) >= ETA_MAX:
        raise SeparationDetected(
            f"no convergence after {max_iter} iterations with |linear predictor| >= {ETA_MAX}"
        )
    return FitResult(beta, converged=False, iterations=max_iter, ridged=ridged)


def balance_weights(pi: np.ndarray, a: np.ndarray, scheme: WeightScheme) -> np.ndarray:
    """Balancing weights for a binary treatment given propensity scores.

    IPTW returns a/pi + (1-a)/(1-pi); overlap returns |a - pi|. Both satisfy
    pi * w(1, pi) = (1 - pi) * w(0, pi) pointwise.
    """
    pi = np.asarray(pi, dtype=float)
    a = np.asarray(a, dtype=float)
    if pi.shape != a.shape:
        raise DimensionMismatch("pi and a must have the same shape")
    if np.any(pi < 0) or np.any(pi > 1):
        raise DomainError("propensity scores must lie in [0, 1]")
    if scheme is WeightScheme.IPTW:
        if np.any((a == 1.0) & (pi == 0.0)) or np.any((a == 0.0) & (pi == 1.0)):
            raise DegenerateScore("IPTW weight would divide by zero")
        with np.errstate(divide="ignore"):
            return np.where(a == 1.0, 1.0 / pi, 1.0 / (1.0 - pi))
    return np.abs(a - pi)


def chisq_quantile(prob: float) -> float:
    """Quantile of the chi-square distribution with one degree of freedom.

    Computed as the squared standard-normal quantile of (1 + prob) / 2.
    """
    if not 0.0 < prob < 1.0:
        raise DomainError(f"prob must lie in (0, 1), got {prob}")
    return float(ndtri((1.0 + prob) / 2.0) ** 2)
