"""Plasmode simulation: real covariates, synthetic confounder and outcome.

Plasmode data keep an observed covariate-and-treatment table fixed and
redraw only the unmeasured confounder (from its posited mean model, a
Bernoulli draw under the logit link or a unit-variance normal under the
identity link) and the outcome (linear model plus the confounder effect and
Gaussian noise). The generating blip coefficients are therefore known
exactly, so coverage of the sensitivity analysis can be scored on data with
realistic covariate structure.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from .. import mcsa as mcsa_mod
from .. import mnboot
from ..confound import ConfounderSpec, Link, NormalPrior, PriorSpec, impute_values
from ..dwols import Panel, StageModelSpec, StageTerms, design_matrix, term_columns
from ..errors import DimensionMismatch, DomainError, DtrsenseError, SchemaMismatch
from ..linmodel import WeightScheme, expit
from ..rng import SeedLike, child_seed, substream


@dataclass(frozen=True)
class PlasmodeModel:
    """Single-stage outcome model used to synthesize plasmode outcomes.

    Terms reference columns of the covariate table; the treatment column is
    named explicitly and intercepts are implied. beta covers the
    treatment-free terms, psi the blip terms, beta_u the confounder effect.
    """

    treatment: str
    treatment_free: tuple[str, ...]
    blip: tuple[str, ...]
    beta: np.ndarray
    psi: np.ndarray
    beta_u: float

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        psi = np.asarray(self.psi, dtype=float)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "psi", psi)
        if beta.shape != (len(self.treatment_free) + 1,):
            raise DimensionMismatch("beta length must be len(treatment_free) + 1")
        if psi.shape != (len(self.blip) + 1,):
            raise DimensionMismatch("psi length must be len(blip) + 1")

    def spec(self) -> StageModelSpec:
        """Analysis spec matching the generating model (propensity on the
        treatment-free terms)."""
        return StageModelSpec(
            (StageTerms(blip=self.blip, treatment_free=self.treatment_free, propensity=self.treatment_free),)
        )


def _table_panel(table: Mapping[str, np.ndarray], treatment: str, y: np.ndarray) -> Panel:
    covs = {k: np.asarray(v, dtype=float) for k, v in table.items() if k != treatment}
    return Panel(
        covariates=covs,
        stages=(tuple(covs.keys()),),
        a=np.asarray(table[treatment], dtype=float),
        y=y,
    )


def _check_columns(table: Mapping[str, np.ndarray], model: PlasmodeModel, conf: ConfounderSpec) -> None:
    needed: set[str] = {model.treatment}
    for term in (*model.treatment_free, *model.blip, *conf.terms):
        for name in term_columns(term):
            # The treatment may appear in the confounder model as "a1".
            if name == "a1":
                continue
            needed.add(name)
    missing = sorted(name for name in needed if name not in table)
    if missing:
        raise SchemaMismatch(f"covariate table is missing columns: {missing}")


def plasmode(
    table: Mapping[str, np.ndarray],
    model: PlasmodeModel,
    confounder: ConfounderSpec,
    noise_sd: float,
    n_sets: int,
    seed: SeedLike,
) -> Iterator[tuple[Panel, np.ndarray]]:
    """Yield n_sets panels with simulated confounder and outcome.

    Every set keeps the table's covariates and treatment, draws the
    confounder from the posited model, and draws the outcome from the
    linear model with standard deviation ``noise_sd``. Yields (panel,
    confounder draw); the confounder is never placed in the panel.
    """
    if noise_sd < 0:
        raise DomainError("noise_sd must be non-negative")
    _check_columns(table, model, confounder)
    shell = _table_panel(table, model.treatment, np.zeros(len(table[model.treatment])))
    a = shell.a[:, 0]
    x_tf = design_matrix(shell, model.treatment_free)
    x_blip = design_matrix(shell, model.blip)
    u_mean = impute_values(design_matrix(shell, confounder.terms), confounder.zeta, confounder.link)
    for i in range(n_sets):
        rng = substream(seed, i)
        if confounder.link is Link.LOGIT:
            u = (rng.random(shell.n) < u_mean).astype(float)
        else:
            u = u_mean + rng.normal(0.0, 1.0, shell.n)
        y = (
            x_tf @ model.beta
            + confounder.beta_u * u
            + a * (x_blip @ model.psi)
            + noise_sd * rng.normal(0.0, 1.0, shell.n)
        )
        yield _table_panel(table, model.treatment, y), u


def synthetic_ehr_table(n: int, seed: SeedLike = 0) -> dict[str, np.ndarray]:
    """Stand-in covariate table with an EHR-like shape: a binary covariate,
    two standardized continuous scores, and a covariate-driven treatment."""
    rng = substream(seed)
    sex = (rng.random(n) < 0.5).astype(float)
    age = rng.normal(0.0, 1.0, n)
    phq = rng.normal(0.0, 1.0, n)
    a1 = (rng.random(n) < expit(0.2 - 0.3 * sex + 0.25 * phq - 0.1 * age)).astype(float)
    return {"sex": sex, "age": age, "phq": phq, "a1": a1}


def substream_key(seed: SeedLike, rep: int) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(entropy=seed.entropy, spawn_key=tuple(seed.spawn_key) + (rep,))
    return np.random.SeedSequence(entropy=seed, spawn_key=(rep,))


@dataclass
class PlasmodeStudyResult:
    """Coverage scores for the plasmode study, per analysis arm."""

    coverage: dict[str, np.ndarray]
    mean_width: dict[str, np.ndarray]
    mean_point: dict[str, np.ndarray]
    reps_used: int
    failures: int


def _plasmode_task(
    table: dict[str, np.ndarray],
    model: PlasmodeModel,
    confounder: ConfounderSpec,
    prior: PriorSpec,
    unadjusted_prior: PriorSpec,
    noise_sd: float,
    seed: int,
    rep: int,
    mc_reps: int,
    scheme: WeightScheme,
) -> tuple[int, dict | str]:
    try:
        panel, _ = next(plasmode(table, model, confounder, noise_sd, 1, substream_key(seed, rep)))
        spec = model.spec()
        out = {}
        for name, pr in (("adjusted", prior), ("unadjusted", unadjusted_prior)):
            mc_cfg = mcsa_mod.McsaConfig(
                reps=mc_reps,
                seed=child_seed(seed, rep, 1 if name == "adjusted" else 2),
                confounder_terms=confounder.terms,
                link=confounder.link,
                prior=pr,
                scheme=scheme,
            )
            sens = mcsa_mod.run(panel, spec, mc_cfg)
            ci = mnboot.intervals(
                panel,
                spec,
                mc_cfg,
                mnboot.CiConfig(
                    reps=mc_reps,
                    seed=child_seed(seed, rep, 3 if name == "adjusted" else 4),
                ),
                mcsa_fit=sens,
            )
            out[name] = (sens.psi_adj[0], ci.lower[0], ci.upper[0])
        return rep, out
    except DtrsenseError as exc:
        return rep, f"{type(exc).__name__}: {exc}"


def plasmode_coverage_study(
    table: Mapping[str, np.ndarray],
    model: PlasmodeModel,
    confounder: ConfounderSpec,
    prior: PriorSpec,
    noise_sd: float = 1.0,
    reps: int = 200,
    mc_reps: int = 200,
    seed: int = 0,
    scheme: WeightScheme = WeightScheme.OVERLAP,
    workers: int = 1,
) -> PlasmodeStudyResult:
    """Score adjusted vs unadjusted interval coverage over plasmode sets.

    The adjusted arm runs the sensitivity analysis under ``prior``; the
    unadjusted arm pins the bias parameters to (zeta, 0), which disables
    the correction while keeping the interval machinery identical.
    """
    table = {k: np.asarray(v, dtype=float) for k, v in table.items()}
    unadjusted_prior = PriorSpec(
        zeta=tuple(NormalPrior(float(z), 0.0) for z in confounder.zeta),
        beta_u=NormalPrior(0.0, 0.0),
    )
    args = [
        (table, model, confounder, prior, unadjusted_prior, noise_sd, seed, rep, mc_reps, scheme)
        for rep in range(reps)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_plasmode_task, *zip(*args), chunksize=1))
    else:
        results = [_plasmode_task(*a) for a in args]
    results.sort(key=lambda item: item[0])
    errors = [msg for _, msg in results if isinstance(msg, str)]
    usable = [payload for _, payload in results if not isinstance(payload, str)]
    if len(errors) > 0.05 * reps:
        raise DtrsenseError(f"{len(errors)} of {reps} plasmode repetitions failed: {errors[:3]}")

    coverage, width, point = {}, {}, {}
    for name in ("adjusted", "unadjusted"):
        pts = np.stack([payload[name][0] for payload in usable])
        lo = np.stack([payload[name][1] for payload in usable])
        hi = np.stack([payload[name][2] for payload in usable])
        covered = (lo <= model.psi) & (model.psi <= hi)
        coverage[name] = covered.mean(axis=0)
        width[name] = (hi - lo).mean(axis=0)
        point[name] = pts.mean(axis=0)
    return PlasmodeStudyResult(
        coverage=coverage,
        mean_width=width,
        mean_point=point,
        reps_used=len(usable),
        failures=len(errors),
    )
