"""Repetition-level study driver: generate, estimate, adjust, score.

Each repetition simulates a fresh panel, runs the unadjusted fit plus the
sensitivity analysis and its confidence intervals under every prior
scenario, and is scored against the process truth: root-mean-squared error
and interval coverage/width per blip coefficient, and the share of fresh
patients whose recommended treatment matches the true optimal rule.

Repetitions are independent and may run across a process pool; every
stochastic quantity derives from (master seed, repetition index), so the
worker count never changes any number.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import mcsa as mcsa_mod
from .. import mnboot
from ..confound import Link, PriorSpec
from ..dwols import Panel, Regime, StageModelSpec, StageRule, fit as dwols_fit, recommend
from ..errors import DomainError, DtrsenseError
from ..linmodel import WeightScheme
from ..rng import SeedLike, child_seed
from .dgp import (
    Dgp,
    OneStageDgp,
    confounder_terms,
    confounder_truth,
    default_model_spec,
    gen_panel,
    true_psi,
    true_regime,
)
from .scenarios import Scenario, scenario_priors

ROLLOUTS = ("truth", "observed")


@dataclass(frozen=True)
class StudyConfig:
    """Study settings; desk-scale defaults, paper scale via the CLI flag."""

    dgp: Dgp
    scenarios: tuple[Scenario, ...] = tuple(Scenario)
    reps: int = 200
    n: int = 1000
    mc_reps: int = 200
    seed: int = 0
    scheme: WeightScheme = WeightScheme.OVERLAP
    kappa: float = 0.05
    nu: float = 0.05
    vartheta: float = 0.05
    sigma_method: str = "bootstrap"
    n_eval: int = 10000
    rollout: str = "truth"
    workers: int = 1
    max_failure_share: float = 0.05

    def __post_init__(self):
        if self.reps < 1:
            raise DomainError("reps must be at least 1")
        if self.rollout not in ROLLOUTS:
            raise DomainError(f"rollout must be one of {ROLLOUTS}")


@dataclass
class StudyMetrics:
    """Aggregated scores for one scenario."""

    scenario: Scenario
    reps_used: int
    failures: int
    rmse: list[np.ndarray]
    coverage: list[np.ndarray]
    mean_width: list[np.ndarray]
    proportion_optimal: np.ndarray
    points: list[np.ndarray] = field(repr=False, default_factory=list)


def _eval_columns(dgp: Dgp, panel: Panel, truth: Regime, rollout: str) -> list[dict]:
    """Per-stage column maps for scoring recommendations on fresh patients."""
    if isinstance(dgp, OneStageDgp):
        return [{"x1": panel.column("x1"), "x2": panel.column("x2")}]
    stage1 = {"x11": panel.column("x11"), "x12": panel.column("x12")}
    if rollout == "truth":
        a1 = recommend(truth, 1, stage1).astype(float)
    else:
        a1 = panel.a[:, 0]
    # The stage-2 covariate model has no first-treatment term, so the
    # panel's own x2 draw is valid under either rollout.
    stage2 = dict(stage1)
    stage2.update({"a1": a1, "x2": panel.column("x2")})
    return [stage1, stage2]


def proportion_optimal(
    est: Regime,
    truth: Regime,
    dgp: Dgp,
    n_eval: int = 10000,
    seed: SeedLike = 0,
    rollout: str = "truth",
) -> np.ndarray:
    """Per-stage share of fresh patients whose recommendation matches truth.

    Histories after stage 1 follow the true rule by default ("truth"
    rollout) or the generated treatments ("observed").
    """
    if rollout not in ROLLOUTS:
        raise DomainError(f"rollout must be one of {ROLLOUTS}")
    panel, _ = gen_panel(dgp, n_eval, seed)
    columns = _eval_columns(dgp, panel, truth, rollout)
    out = np.empty(len(columns))
    for k, cols in enumerate(columns, start=1):
        out[k - 1] = np.mean(recommend(est, k, cols) == recommend(truth, k, cols))
    return out


def _rep_task(
    dgp: Dgp,
    spec: StageModelSpec,
    priors: list[tuple[Scenario, PriorSpec]],
    cfg: StudyConfig,
    rep: int,
) -> tuple[int, dict | str]:
    """One repetition; returns scenario payloads or an error message."""
    try:
        panel, _ = gen_panel(dgp, cfg.n, np.random.SeedSequence(cfg.seed, spawn_key=(rep, 0)))
        plain = dwols_fit(panel, spec, cfg.scheme)
        terms = confounder_terms(dgp)
        out = {}
        for i, (scenario, prior) in enumerate(priors):
            mc_cfg = mcsa_mod.McsaConfig(
                reps=cfg.mc_reps,
                seed=child_seed(cfg.seed, rep, 1, i),
                confounder_terms=terms,
                link=Link.IDENTITY,
                prior=prior,
                scheme=cfg.scheme,
            )
            sens = mcsa_mod.run(panel, spec, mc_cfg)
            ci = mnboot.intervals(
                panel,
                spec,
                mc_cfg,
                mnboot.CiConfig(
                    reps=cfg.mc_reps,
                    seed=child_seed(cfg.seed, rep, 2, i),
                    kappa=cfg.kappa,
                    nu=cfg.nu,
                    vartheta=cfg.vartheta,
                    sigma_method=cfg.sigma_method,
                ),
                mcsa_fit=sens,
            )
            if scenario is Scenario.UNADJUSTED:
                point = [np.asarray(f.psi, dtype=float) for f in plain]
            else:
                point = [np.asarray(p, dtype=float) for p in sens.psi_adj]
            out[scenario] = (point, ci.lower, ci.upper)
        return rep, out
    except DtrsenseError as exc:
        return rep, f"{type(exc).__name__}: {exc}"


def run_study(cfg: StudyConfig) -> dict[Scenario, StudyMetrics]:
    """Run all repetitions and aggregate metrics per scenario."""
    dgp = cfg.dgp
    spec = default_model_spec(dgp)
    zeta_star, beta_u_star = confounder_truth(dgp)
    priors = [(s, scenario_priors(s, zeta_star, beta_u_star)) for s in cfg.scenarios]
    truth = true_psi(dgp)
    truth_rule = true_regime(dgp)

    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(
                pool.map(
                    _rep_task,
                    [dgp] * cfg.reps,
                    [spec] * cfg.reps,
                    [priors] * cfg.reps,
                    [cfg] * cfg.reps,
                    range(cfg.reps),
                    chunksize=1,
                )
            )
    else:
        results = [_rep_task(dgp, spec, priors, cfg, rep) for rep in range(cfg.reps)]

    results.sort(key=lambda item: item[0])
    errors = [(rep, payload) for rep, payload in results if isinstance(payload, str)]
    usable = [(rep, payload) for rep, payload in results if not isinstance(payload, str)]
    if len(errors) > cfg.max_failure_share * cfg.reps:
        detail = "; ".join(f"rep {rep}: {msg}" for rep, msg in errors[:5])
        raise DtrsenseError(
            f"{len(errors)} of {cfg.reps} repetitions failed (> {cfg.max_failure_share:.0%}): {detail}"
        )

    metrics: dict[Scenario, StudyMetrics] = {}
    n_stages = len(truth)
    for scenario, _ in priors:
        points = [
            np.stack([payload[scenario][0][k] for _, payload in usable])
            for k in range(n_stages)
        ]
        lowers = [
            np.stack([payload[scenario][1][k] for _, payload in usable])
            for k in range(n_stages)
        ]
        uppers = [
            np.stack([payload[scenario][2][k] for _, payload in usable])
            for k in range(n_stages)
        ]
        rmse, coverage, width = [], [], []
        for k in range(n_stages):
            rmse.append(np.sqrt(np.mean((points[k] - truth[k]) ** 2, axis=0)))
            covered = (lowers[k] <= truth[k]) & (truth[k] <= uppers[k])
            coverage.append(covered.mean(axis=0))
            width.append((uppers[k] - lowers[k]).mean(axis=0))
        prop = np.zeros(n_stages)
        for rep, payload in usable:
            est = _regime_from_points(spec, payload[scenario][0])
            prop += proportion_optimal(
                est, truth_rule, dgp, cfg.n_eval,
                np.random.SeedSequence(cfg.seed, spawn_key=(rep, 3)), cfg.rollout,
            )
        prop /= len(usable)
        metrics[scenario] = StudyMetrics(
            scenario=scenario,
            reps_used=len(usable),
            failures=len(errors),
            rmse=rmse,
            coverage=coverage,
            mean_width=width,
            proportion_optimal=prop,
            points=points,
        )
    return metrics


def _regime_from_points(spec: StageModelSpec, points: list[np.ndarray]) -> Regime:
    return Regime(
        tuple(StageRule(st.blip, np.asarray(p, dtype=float)) for st, p in zip(spec.stages, points))
    )
