"""Monte Carlo sensitivity analysis: bootstrap x prior-draw estimation loop.

Each repetition draws an n-out-of-n bootstrap resample, samples the bias
parameters (zeta, beta_u) from their priors, imputes the confounder mean
from the resampled final-stage history, and runs the backward dWOLS sweep
with the bias subtracted at every stage; earlier-stage pseudo-outcomes use
the adjusted later-stage coefficients. The reported estimate is the
per-stage average over repetitions.

Repetitions draw from independent substreams of the master seed, so results
are identical under any execution order. A repetition that fails
numerically (singular resample design, one treatment class, separated
propensity fit) is redrawn from a fresh substream up to a fixed attempt
budget per repetition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .confound import Link, PriorSpec, impute_values
from .dwols import Panel, StageData, StageModelSpec, backward_pass, design_matrix, stage_data
from .errors import (
    DegenerateScore,
    DomainError,
    ResampleExhausted,
    SeparationDetected,
    SingleClass,
    SingularDesign,
)
from .linmodel import WeightScheme
from .rng import SeedLike, substream

RETRYABLE = (SingularDesign, SingleClass, SeparationDetected, DegenerateScore)
MAX_ATTEMPTS_PER_REP = 10


@dataclass(frozen=True)
class McsaConfig:
    """Settings for one sensitivity-analysis run."""

    reps: int
    seed: int
    confounder_terms: tuple[str, ...]
    link: Link
    prior: PriorSpec
    scheme: WeightScheme = WeightScheme.OVERLAP

    def __post_init__(self):
        if self.reps < 1:
            raise DomainError("reps must be at least 1")


@dataclass
class McsaFit:
    """Per-repetition and averaged bias-adjusted blip coefficients.

    draws[k] is the (reps, p_k) matrix of adjusted stage-(k+1) coefficients;
    psi_adj[k] is its column mean. zeta_draws, beta_u_draws, and indices
    record what each repetition sampled; failures counts redrawn attempts.
    """

    psi_adj: list[np.ndarray]
    draws: list[np.ndarray]
    zeta_draws: np.ndarray
    beta_u_draws: np.ndarray
    indices: np.ndarray
    failures: int = 0
    failure_log: list[str] = field(default_factory=list)


def resample_estimate(
    stages: list[StageData],
    y: np.ndarray,
    u_design: np.ndarray,
    cfg: McsaConfig,
    rep: int,
    m: int | None = None,
    seed: SeedLike | None = None,
) -> tuple[list[np.ndarray], np.ndarray, float, np.ndarray, list[str]]:
    """One bootstrap repetition.

    Draws a resample of size m (defaults to n), samples the bias parameters,
    imputes the confounder, and runs the adjusted backward sweep. Failed
    attempts are redrawn from fresh substreams; exceeding the budget raises
    ResampleExhausted. Returns (per-stage psi_adj, zeta, beta_u, idx,
    messages for redrawn attempts).
    """
    n = y.shape[0]
    if m is None:
        m = n
    base = cfg.seed if seed is None else seed
    errors: list[str] = []
    for attempt in range(MAX_ATTEMPTS_PER_REP):
        rng = substream(base, rep, attempt)
        idx = rng.integers(0, n, size=m)
        zeta, beta_u = cfg.prior.sample(rng)
        try:
            u_hat = impute_values(u_design[idx], zeta, cfg.link)
            fits = backward_pass(
                [sd.take(idx) for sd in stages], y[idx], cfg.scheme, u_hat, beta_u
            )
        except RETRYABLE as exc:
            errors.append(f"rep {rep} attempt {attempt}: {exc}")
            continue
        return [f.psi for f in fits], zeta, beta_u, idx, errors
    raise ResampleExhausted(
        f"repetition {rep} failed {MAX_ATTEMPTS_PER_REP} consecutive attempts; last: {errors[-1]}"
    )


def run(panel: Panel, spec: StageModelSpec, cfg: McsaConfig) -> McsaFit:
    """Run the full bootstrap x prior-draw loop and average the draws."""
    stages = stage_data(panel, spec)
    u_design = design_matrix(panel, cfg.confounder_terms)
    n, n_stages = panel.n, panel.n_stages
    draws = [np.empty((cfg.reps, sd.h_blip.shape[1])) for sd in stages]
    zeta_draws = np.empty((cfg.reps, u_design.shape[1]))
    beta_u_draws = np.empty(cfg.reps)
    indices = np.empty((cfg.reps, n), dtype=np.intp)
    failures = 0
    failure_log: list[str] = []
    for b in range(cfg.reps):
        psis, zeta, beta_u, idx, errors = resample_estimate(stages, panel.y, u_design, cfg, b)
        failures += len(errors)
        failure_log.extend(errors)
        for k in range(n_stages):
            draws[k][b] = psis[k]
        zeta_draws[b] = zeta
        beta_u_draws[b] = beta_u
        indices[b] = idx
    return McsaFit(
        psi_adj=[d.mean(axis=0) for d in draws],
        draws=draws,
        zeta_draws=zeta_draws,
        beta_u_draws=beta_u_draws,
        indices=indices,
        failures=failures,
        failure_log=failure_log,
    )
