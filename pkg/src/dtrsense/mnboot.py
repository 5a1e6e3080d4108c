"""Adaptive m-out-of-n bootstrap confidence intervals for blip coefficients.

Near-zero blips make the backward recursion non-smooth, so plain bootstrap
intervals can undercover. The remedy implemented here estimates, per stage,
the fraction of patients whose blip is statistically indistinguishable from
zero (the non-regularity proportion p), shrinks the resample size from n to
n^((1 + kappa(1 - p)) / (1 + kappa)) accordingly, and builds centered
percentile intervals from resamples of that size. Each resample repeats the
full sensitivity-analysis estimation, including fresh draws of the bias
parameters, so prior uncertainty propagates into the intervals.

The final-stage proportion comes from a per-patient Wald pretest against a
covariance estimate of the fitted coefficients. The default estimate is n
times the covariance of the sensitivity-analysis draws, which includes the
bias-parameter uncertainty the adjusted estimator actually carries; a
sampling-only sandwich estimate from the final-stage regression is the
configurable alternative. Earlier stages use the fraction of per-patient
percentile intervals that straddle zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mcsa as mcsa_mod
from .dwols import Panel, StageData, StageModelSpec, backward_pass, design_matrix, stage_data
from .errors import DimensionMismatch, DomainError, InsufficientB
from .linmodel import chisq_quantile
from .mcsa import McsaConfig, McsaFit

SIGMA_METHODS = ("sandwich", "bootstrap")


@dataclass(frozen=True)
class CiConfig:
    """Interval settings: pretest level nu, size exponent kappa, per-stage
    interval levels vartheta, and the bootstrap budget."""

    reps: int
    seed: int
    kappa: float = 0.05
    nu: float = 0.05
    vartheta: float | tuple[float, ...] = 0.05
    sigma_method: str = "bootstrap"

    def __post_init__(self):
        if self.kappa <= 0:
            raise DomainError("kappa must be positive")
        if not 0 < self.nu < 1:
            raise DomainError("nu must lie in (0, 1)")
        for v in self.vartheta if isinstance(self.vartheta, tuple) else (self.vartheta,):
            if not 0 < v < 1:
                raise DomainError("vartheta levels must lie in (0, 1)")
        if self.sigma_method not in SIGMA_METHODS:
            raise DomainError(f"sigma_method must be one of {SIGMA_METHODS}")

    def vartheta_for(self, k: int, n_stages: int) -> float:
        if isinstance(self.vartheta, tuple):
            if len(self.vartheta) != n_stages:
                raise DimensionMismatch("vartheta tuple length must equal the stage count")
            return self.vartheta[k - 1]
        return self.vartheta


@dataclass
class CiReport:
    """Per-stage non-regularity estimates, resample sizes, and intervals."""

    p_hat: np.ndarray
    p_hat_global: float
    m_hat: np.ndarray
    m_hat_global: int
    lower: list[np.ndarray]
    upper: list[np.ndarray]
    psi_adj: list[np.ndarray]
    sigma: np.ndarray
    sigma_method: str
    prior_redraw: bool = True
    failures: int = 0


def boot_percentiles(draws: np.ndarray, level: float) -> tuple[np.ndarray, np.ndarray]:
    """Order-statistic percentile pair at level/2 and 1 - level/2.

    Uses the finite-B convention: the q-th percentile of B draws is the
    order statistic of rank (B + 1) q, rounded outward (down for the lower
    tail, up for the upper) so the pair is never narrower than the target
    mass. draws has repetitions on axis 0.
    """
    b = draws.shape[0]
    lo_rank = max(int(np.floor((b + 1) * (level / 2.0))), 1)
    hi_rank = min(int(np.ceil((b + 1) * (1.0 - level / 2.0))), b)
    ordered = np.sort(draws, axis=0)
    return ordered[lo_rank - 1], ordered[hi_rank - 1]


def pretest_pk(h_blip: np.ndarray, psi_adj: np.ndarray, sigma: np.ndarray, nu: float) -> float:
    """Fraction of patients whose final-stage blip fails a level-nu Wald test.

    A patient counts when n * (h'psi)^2 <= h' Sigma h * q, with q the
    (1 - nu) chi-square(1) quantile and Sigma an estimate of n times the
    coefficient covariance.
    """
    h = np.atleast_2d(np.asarray(h_blip, dtype=float))
    psi_adj = np.asarray(psi_adj, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    p = psi_adj.shape[0]
    if h.shape[1] != p or sigma.shape != (p, p):
        raise DimensionMismatch("blip design, psi, and sigma dimensions disagree")
    n = h.shape[0]
    q = chisq_quantile(1.0 - nu)
    stat = n * (h @ psi_adj) ** 2
    bound = np.einsum("ij,jk,ik->i", h, sigma, h) * q
    return float(np.mean(stat <= bound))


def resample_size(p_hat: float, n: int, kappa: float) -> int:
    """Adaptive resample size round(n^((1 + kappa(1 - p)) / (1 + kappa))).

    Monotone decreasing in p_hat, from n at p_hat = 0 down to
    round(n^(1 / (1 + kappa))) at p_hat = 1. Halves round up.
    """
    if not 0.0 <= p_hat <= 1.0:
        raise DomainError("p_hat must lie in [0, 1]")
    if n < 2:
        raise DomainError("n must be at least 2")
    exponent = (1.0 + kappa * (1.0 - p_hat)) / (1.0 + kappa)
    return int(np.floor(n**exponent + 0.5))


def sandwich_sigma(sd: StageData, y: np.ndarray, psi: np.ndarray, beta: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Robust estimate of n x Cov(psi_hat) for one weighted stage regression."""
    design = np.hstack([sd.h_tf, sd.a[:, None] * sd.h_blip])
    theta = np.concatenate([beta, psi])
    resid = y - design @ theta
    n = design.shape[0]
    bread = (design * w[:, None]).T @ design / n
    meat = (design * ((w * resid) ** 2)[:, None]).T @ design / n
    inv = np.linalg.inv(bread)
    full = inv @ meat @ inv
    p_tf = sd.h_tf.shape[1]
    return full[p_tf:, p_tf:]


def bootstrap_sigma(draws: np.ndarray, n: int) -> np.ndarray:
    """n-scaled covariance of per-repetition adjusted coefficients."""
    return n * np.cov(draws, rowvar=False, ddof=1)


def _collect_draws(
    stages: list[StageData],
    y: np.ndarray,
    u_design: np.ndarray,
    mcsa_cfg: McsaConfig,
    reps: int,
    m: int,
    seed: np.random.SeedSequence,
) -> tuple[list[np.ndarray], int]:
    """Adjusted estimates for all stages over `reps` resamples of size m."""
    draws = [np.empty((reps, sd.h_blip.shape[1])) for sd in stages]
    failures = 0
    for b in range(reps):
        psis, _, _, _, errors = mcsa_mod.resample_estimate(
            stages, y, u_design, mcsa_cfg, b, m=m, seed=seed
        )
        failures += len(errors)
        for k, psi in enumerate(psis):
            draws[k][b] = psi
    return draws, failures


def intervals(
    panel: Panel,
    spec: StageModelSpec,
    mcsa_cfg: McsaConfig,
    ci_cfg: CiConfig,
    mcsa_fit: McsaFit | None = None,
) -> CiReport:
    """Confidence intervals for every blip coefficient at every stage.

    Runs the sensitivity analysis if no fit is supplied, pretests the final
    stage, walks earlier stages with per-patient percentile intervals to
    estimate their non-regularity proportions, then draws the final
    resamples at the global adaptive size and returns centered percentile
    intervals (psi - u / sqrt(m), psi - l / sqrt(m)).
    """
    if ci_cfg.reps < 40:
        raise InsufficientB(f"reps={ci_cfg.reps} < 40 gives unstable percentiles")
    stages = stage_data(panel, spec)
    u_design = design_matrix(panel, mcsa_cfg.confounder_terms)
    if mcsa_fit is None:
        mcsa_fit = mcsa_mod.run(panel, spec, mcsa_cfg)
    n, n_stages = panel.n, panel.n_stages
    failures = mcsa_fit.failures

    # Final-stage pretest against the adjusted estimator's covariance.
    last = stages[-1]
    if ci_cfg.sigma_method == "bootstrap":
        sigma = bootstrap_sigma(mcsa_fit.draws[-1], n)
    else:
        full = backward_pass(stages, panel.y, mcsa_cfg.scheme)
        fk = full[-1]
        sigma = sandwich_sigma(last, panel.y, fk.psi, fk.beta, fk.weights)

    p_hat = np.empty(n_stages)
    m_hat = np.empty(n_stages, dtype=int)
    p_hat[-1] = pretest_pk(last.h_blip, mcsa_fit.psi_adj[-1], sigma, ci_cfg.nu)
    m_hat[-1] = resample_size(p_hat[-1], n, ci_cfg.kappa)

    # Earlier stages: share of per-patient blip intervals that straddle zero,
    # computed from resamples at the most recently determined size.
    m_prev = int(m_hat[-1])
    for k in range(n_stages - 1, 0, -1):
        draws, fails = _collect_draws(
            stages, panel.y, u_design, mcsa_cfg, ci_cfg.reps, m_prev,
            np.random.SeedSequence(ci_cfg.seed, spawn_key=(k,)),
        )
        failures += fails
        blips = draws[k - 1] @ stages[k - 1].h_blip.T
        lo, hi = boot_percentiles(blips, ci_cfg.nu)
        p_hat[k - 1] = float(np.mean((lo <= 0.0) & (0.0 <= hi)))
        m_hat[k - 1] = resample_size(p_hat[k - 1], n, ci_cfg.kappa)
        m_prev = int(m_hat[k - 1])

    p_global = float(np.max(p_hat))
    m_global = resample_size(p_global, n, ci_cfg.kappa)

    final_draws, fails = _collect_draws(
        stages, panel.y, u_design, mcsa_cfg, ci_cfg.reps, m_global,
        np.random.SeedSequence(ci_cfg.seed, spawn_key=(0,)),
    )
    failures += fails

    lower, upper = [], []
    root_m = np.sqrt(m_global)
    for k in range(1, n_stages + 1):
        vt = ci_cfg.vartheta_for(k, n_stages)
        centered = root_m * (final_draws[k - 1] - mcsa_fit.psi_adj[k - 1])
        l, u = boot_percentiles(centered, vt)
        lower.append(mcsa_fit.psi_adj[k - 1] - u / root_m)
        upper.append(mcsa_fit.psi_adj[k - 1] - l / root_m)

    return CiReport(
        p_hat=p_hat,
        p_hat_global=p_global,
        m_hat=m_hat,
        m_hat_global=m_global,
        lower=lower,
        upper=upper,
        psi_adj=[p.copy() for p in mcsa_fit.psi_adj],
        sigma=sigma,
        sigma_method=ci_cfg.sigma_method,
        failures=failures,
    )
