"""Synthetic data-generating processes with a latent time-fixed confounder.

Both processes share the same skeleton: a standard-normal latent variable U
drives two baseline covariates, enters every treatment logit, and adds
beta_u * U to the outcome. U is returned separately from the panel and must
never be given to an estimator; it exists so studies know the truth.

True optimal rules: the final stage reads directly off the outcome model's
treatment interaction. The first stage of the two-stage process has no
closed form printed anywhere, so it is estimated once per process by
regressing the simulated potential-outcome contrast on the baseline
covariates at large scale, and cached against the process parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..dwols import Panel, Regime, StageModelSpec, StageRule, StageTerms
from ..errors import DomainError
from ..linmodel import expit
from ..rng import SeedLike, substream

# Internal stream keys for the truth oracles; fixed so caches are stable.
_TRUTH_SEED = 202_6_01
_STAGE1_ORACLE_DRAWS = 10_000_000
_CONFOUNDER_ORACLE_DRAWS = 1_000_000


@dataclass(frozen=True)
class OneStageDgp:
    """One decision stage: two confounded covariates, one treatment."""

    phi1: tuple[float, float] = (0.0, 1.0)
    phi2: tuple[float, float] = (0.0, -1.0)
    alpha: tuple[float, float, float, float] = (0.0, 1.0, 1.0, 2.0)
    beta: tuple[float, float, float] = (1.0, 1.0, 1.0)
    beta_u: float = 2.0
    psi: tuple[float, float, float] = (-1.0, 0.5, 0.5)
    var_u: float = 1.0
    var_x1: float = 1.0
    var_x2: float = 1.0
    var_y: float = 1.0

    def __post_init__(self):
        if min(self.var_u, self.var_x1, self.var_x2, self.var_y) <= 0:
            raise DomainError("variances must be positive")


@dataclass(frozen=True)
class TwoStageDgp:
    """Two decision stages; the stage-2 covariate depends on the baseline
    covariates but not on the first treatment, and the first-stage true blip
    is implied rather than parameterized."""

    phi1: tuple[float, float] = (0.0, 1.0)
    phi2: tuple[float, float] = (0.0, -1.0)
    varpi: tuple[float, float, float] = (0.0, 1.0, 1.0)
    alpha1: tuple[float, float, float, float] = (0.0, 1.0, 1.0, 2.0)
    alpha2: tuple[float, float, float, float, float, float] = (0.0, 1.0, 1.0, 1.0, 1.0, 3.0)
    beta2: tuple[float, float, float, float, float, float, float] = (1.0, -1.0, 1.0, -1.0, 1.0, 1.0, 1.0)
    beta_u: float = 2.0
    psi2: tuple[float, float, float, float] = (-1.0, 0.5, 0.5, 0.5)
    var_u: float = 1.0
    var_x11: float = 1.0
    var_x12: float = 1.0
    var_x2: float = 1.0
    var_y: float = 1.0

    def __post_init__(self):
        if min(self.var_u, self.var_x11, self.var_x12, self.var_x2, self.var_y) <= 0:
            raise DomainError("variances must be positive")


Dgp = OneStageDgp | TwoStageDgp


def gen_one_stage(dgp: OneStageDgp, n: int, seed: SeedLike) -> tuple[Panel, np.ndarray]:
    """Sample n one-stage trajectories; returns (panel, latent U)."""
    if n < 1:
        raise DomainError("n must be at least 1")
    rng = substream(seed)
    u = rng.normal(0.0, np.sqrt(dgp.var_u), n)
    x1 = dgp.phi1[0] + dgp.phi1[1] * u + rng.normal(0.0, np.sqrt(dgp.var_x1), n)
    x2 = dgp.phi2[0] + dgp.phi2[1] * u + rng.normal(0.0, np.sqrt(dgp.var_x2), n)
    a0, a1c, a2c, au = dgp.alpha
    a = (rng.random(n) < expit(a0 + a1c * x1 + a2c * x2 + au * u)).astype(float)
    b0, b1, b2 = dgp.beta
    p0, p1, p2 = dgp.psi
    y = (
        b0 + b1 * x1 + b2 * x2 + dgp.beta_u * u
        + a * (p0 + p1 * x1 + p2 * x2)
        + rng.normal(0.0, np.sqrt(dgp.var_y), n)
    )
    panel = Panel(covariates={"x1": x1, "x2": x2}, stages=(("x1", "x2"),), a=a, y=y)
    return panel, u


def gen_two_stage(dgp: TwoStageDgp, n: int, seed: SeedLike) -> tuple[Panel, np.ndarray]:
    """Sample n two-stage trajectories; returns (panel, latent U)."""
    if n < 1:
        raise DomainError("n must be at least 1")
    rng = substream(seed)
    u = rng.normal(0.0, np.sqrt(dgp.var_u), n)
    x11 = dgp.phi1[0] + dgp.phi1[1] * u + rng.normal(0.0, np.sqrt(dgp.var_x11), n)
    x12 = dgp.phi2[0] + dgp.phi2[1] * u + rng.normal(0.0, np.sqrt(dgp.var_x12), n)
    x2 = (
        dgp.varpi[0] + dgp.varpi[1] * x11 + dgp.varpi[2] * x12
        + rng.normal(0.0, np.sqrt(dgp.var_x2), n)
    )
    g10, g11, g12, g1u = dgp.alpha1
    a1 = (rng.random(n) < expit(g10 + g11 * x11 + g12 * x12 + g1u * u)).astype(float)
    g20, g21, g22, g23, g24, g2u = dgp.alpha2
    a2 = (
        rng.random(n) < expit(g20 + g21 * x11 + g22 * x12 + g23 * a1 + g24 * x2 + g2u * u)
    ).astype(float)
    b = dgp.beta2
    q = dgp.psi2
    y = (
        b[0] + b[1] * x11 + b[2] * x12 + b[3] * a1 + b[4] * a1 * x11 + b[5] * a1 * x12
        + b[6] * x2 + dgp.beta_u * u
        + a2 * (q[0] + q[1] * x11 + q[2] * x12 + q[3] * x2)
        + rng.normal(0.0, np.sqrt(dgp.var_y), n)
    )
    panel = Panel(
        covariates={"x11": x11, "x12": x12, "x2": x2},
        stages=(("x11", "x12"), ("x2",)),
        a=np.column_stack([a1, a2]),
        y=y,
    )
    return panel, u


def gen_panel(dgp: Dgp, n: int, seed: SeedLike) -> tuple[Panel, np.ndarray]:
    """Dispatch to the generator matching the process type."""
    if isinstance(dgp, OneStageDgp):
        return gen_one_stage(dgp, n, seed)
    return gen_two_stage(dgp, n, seed)


@lru_cache(maxsize=8)
def stage1_truth(dgp: TwoStageDgp) -> tuple[np.ndarray, np.ndarray]:
    """First-stage true blip coefficients of a two-stage process.

    Estimated by regressing the potential-outcome contrast under optimal
    continuation, Y*(1, d2) - Y*(0, d2), on (1, x11, x12) over ten million
    simulated patients. Returns (coefficients, their Monte Carlo standard
    errors); cached on the process parameters.
    """
    rng = substream(_TRUTH_SEED)
    xtx = np.zeros((3, 3))
    xty = np.zeros(3)
    sq = 0.0
    total = 0
    batch = 1_000_000
    b = dgp.beta2
    q = dgp.psi2
    while total < _STAGE1_ORACLE_DRAWS:
        m = min(batch, _STAGE1_ORACLE_DRAWS - total)
        u = rng.normal(0.0, np.sqrt(dgp.var_u), m)
        x11 = dgp.phi1[0] + dgp.phi1[1] * u + rng.normal(0.0, np.sqrt(dgp.var_x11), m)
        x12 = dgp.phi2[0] + dgp.phi2[1] * u + rng.normal(0.0, np.sqrt(dgp.var_x12), m)
        # The stage-2 covariate model has no first-treatment term, so the
        # same draw serves both arms of the contrast; shared outcome noise
        # cancels in the difference.
        x2 = (
            dgp.varpi[0] + dgp.varpi[1] * x11 + dgp.varpi[2] * x12
            + rng.normal(0.0, np.sqrt(dgp.var_x2), m)
        )
        blip2 = q[0] + q[1] * x11 + q[2] * x12 + q[3] * x2
        d2 = (blip2 > 0.0).astype(float)
        eps_y = rng.normal(0.0, np.sqrt(dgp.var_y), m)
        y1 = (
            b[0] + b[1] * x11 + b[2] * x12 + b[3] + b[4] * x11 + b[5] * x12
            + b[6] * x2 + dgp.beta_u * u + d2 * blip2 + eps_y
        )
        y0 = (
            b[0] + b[1] * x11 + b[2] * x12
            + b[6] * x2 + dgp.beta_u * u + d2 * blip2 + eps_y
        )
        contrast = y1 - y0
        x = np.column_stack([np.ones(m), x11, x12])
        xtx += x.T @ x
        xty += x.T @ contrast
        sq += float(contrast @ contrast)
        total += m
    coef = np.linalg.solve(xtx, xty)
    rss = max(sq - coef @ xty, 0.0)
    mse = rss / max(total - 3, 1)
    se = np.sqrt(np.diag(mse * np.linalg.inv(xtx)))
    return coef, se


def true_regime(dgp: Dgp) -> Regime:
    """Rule that treats exactly when the true blip is positive."""
    if isinstance(dgp, OneStageDgp):
        return Regime((StageRule(("x1", "x2"), np.array(dgp.psi)),))
    psi1, _ = stage1_truth(dgp)
    return Regime(
        (
            StageRule(("x11", "x12"), psi1),
            StageRule(("x11", "x12", "x2"), np.array(dgp.psi2)),
        )
    )


def true_psi(dgp: Dgp) -> list[np.ndarray]:
    """True blip coefficients per stage (stage-1 values via the oracle)."""
    return [np.asarray(rule.psi, dtype=float) for rule in true_regime(dgp).stages]


@lru_cache(maxsize=8)
def confounder_truth(dgp: Dgp) -> tuple[np.ndarray, float]:
    """True bias parameters (zeta*, beta_u*) for the posited confounder model.

    zeta* is the least-squares projection of the latent confounder on the
    full-history design (intercept, covariates, treatments), estimated at
    one million draws and cached; beta_u* is the outcome coefficient of U.
    """
    panel, u = gen_panel(dgp, _CONFOUNDER_ORACLE_DRAWS, _TRUTH_SEED)
    x = _confounder_design(panel)
    coef, *_ = np.linalg.lstsq(x, u, rcond=None)
    return coef, dgp.beta_u


def confounder_terms(dgp: Dgp) -> tuple[str, ...]:
    """Posited mean-model terms: all covariates and treatments in stage order."""
    if isinstance(dgp, OneStageDgp):
        return ("x1", "x2", "a1")
    return ("x11", "x12", "a1", "x2", "a2")


def _confounder_design(panel: Panel) -> np.ndarray:
    cols = [np.ones(panel.n)]
    if "x1" in panel.covariates:
        cols += [panel.column("x1"), panel.column("x2"), panel.a[:, 0]]
    else:
        cols += [
            panel.column("x11"),
            panel.column("x12"),
            panel.a[:, 0],
            panel.column("x2"),
            panel.a[:, 1],
        ]
    return np.column_stack(cols)


def default_model_spec(dgp: Dgp) -> StageModelSpec:
    """Analysis models mirroring each process: blip and treatment-free terms
    from the outcome model, main-effects propensity terms."""
    if isinstance(dgp, OneStageDgp):
        return StageModelSpec(
            (
                StageTerms(
                    blip=("x1", "x2"),
                    treatment_free=("x1", "x2"),
                    propensity=("x1", "x2"),
                ),
            )
        )
    return StageModelSpec(
        (
            StageTerms(
                blip=("x11", "x12"),
                treatment_free=("x11", "x12"),
                propensity=("x11", "x12"),
            ),
            StageTerms(
                blip=("x11", "x12", "x2"),
                treatment_free=("x11", "x12", "a1", "a1:x11", "a1:x12", "x2"),
                propensity=("x11", "x12", "a1", "x2"),
            ),
        )
    )
