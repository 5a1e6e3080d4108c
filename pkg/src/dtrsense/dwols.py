"""Backward-recursive dynamic weighted OLS estimation of treatment rules.

A Panel holds n patient trajectories over K stages: named covariate columns
grouped by the stage at which they become available, binary treatments, and
a terminal outcome coded so that higher is better. A StageModelSpec names,
for every stage, the terms of the blip (treatment-effect) model, the
treatment-free model, and the propensity model; intercepts are implied and
the blip terms must be a subset of the treatment-free terms.

Estimation proceeds from the last stage backwards: at each stage the
outcome (or pseudo-outcome) is regressed on the treatment-free design plus
the treatment-by-blip design using balancing weights from a logistic
propensity fit. The estimated rule treats a patient whenever the fitted
blip is positive; a blip of exactly zero falls back to the reference
treatment for determinism.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, DomainError, SchemaMismatch
from .linmodel import FitResult, WeightScheme, balance_weights, expit, logistic_fit, wls_multi

_TREATMENT_RE = re.compile(r"^a([1-9][0-9]*)$")
_RESERVED = {"y", "id"}


def treatment_name(k: int) -> str:
    """Column name of the stage-k treatment."""
    return f"a{k}"


@dataclass(frozen=True)
class Panel:
    """Immutable panel of n trajectories over K stages.

    covariates maps column names to (n,) float arrays; stages lists the
    covariate names that become available at each stage (index 0 holds the
    baseline block); a is the (n, K) 0/1 treatment matrix and y the (n,)
    outcome. Treatment columns are addressed as "a1".."aK" and may not
    collide with covariate names.
    """

    covariates: Mapping[str, np.ndarray]
    stages: tuple[tuple[str, ...], ...]
    a: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "y", y)
        n = y.shape[0]
        if a.shape[0] != n:
            raise DimensionMismatch("treatments and outcome disagree on n")
        if not np.all((a == 0.0) | (a == 1.0)):
            raise DomainError("treatments must be binary 0/1")
        if len(self.stages) != a.shape[1]:
            raise DimensionMismatch(
                f"{len(self.stages)} stage blocks but {a.shape[1]} treatment columns"
            )
        if not np.all(np.isfinite(y)):
            raise DomainError("outcome contains non-finite values")
        named = [name for block in self.stages for name in block]
        if len(set(named)) != len(named):
            raise SchemaMismatch("duplicate covariate name across stage blocks")
        for name in named:
            if name not in self.covariates:
                raise SchemaMismatch(f"stage block references unknown column {name!r}")
            if _TREATMENT_RE.match(name) or name in _RESERVED:
                raise SchemaMismatch(f"covariate name {name!r} is reserved")
        for name, col in self.covariates.items():
            col = np.asarray(col, dtype=float)
            if col.shape != (n,):
                raise DimensionMismatch(f"column {name!r} has shape {col.shape}, want ({n},)")
            if not np.all(np.isfinite(col)):
                raise DomainError(f"column {name!r} contains non-finite values")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def n_stages(self) -> int:
        return self.a.shape[1]

    def column(self, name: str) -> np.ndarray:
        """Resolve a covariate or treatment column by name."""
        m = _TREATMENT_RE.match(name)
        if m:
            k = int(m.group(1))
            if k > self.n_stages:
                raise SchemaMismatch(f"no treatment column {name!r} (K={self.n_stages})")
            return self.a[:, k - 1]
        if name not in self.covariates:
            raise SchemaMismatch(f"unknown column {name!r}")
        return np.asarray(self.covariates[name], dtype=float)

    def available_at(self, k: int) -> set[str]:
        """Names observable when the stage-k treatment is chosen (1-based)."""
        names: set[str] = set()
        for j in range(k):
            names.update(self.stages[j])
        names.update(treatment_name(j) for j in range(1, k))
        return names

    def subset(self, idx: np.ndarray) -> "Panel":
        """Row-subset (e.g. a bootstrap resample) as a new Panel."""
        return Panel(
            covariates={name: np.asarray(col, dtype=float)[idx] for name, col in self.covariates.items()},
            stages=self.stages,
            a=self.a[idx],
            y=self.y[idx],
        )


def resolve_term(panel: Panel, term: str) -> np.ndarray:
    """Evaluate a term: a column name, or a ':'-separated product of columns."""
    parts = term.split(":")
    col = panel.column(parts[0])
    for part in parts[1:]:
        col = col * panel.column(part)
    return col


def term_columns(term: str) -> list[str]:
    return term.split(":")


def design_matrix(panel: Panel, terms: Sequence[str]) -> np.ndarray:
    """Design matrix with a leading intercept column followed by the terms."""
    cols = [np.ones(panel.n)]
    cols.extend(resolve_term(panel, t) for t in terms)
    return np.column_stack(cols)


@dataclass(frozen=True)
class StageTerms:
    """Term lists for one stage; intercepts are implied in all three designs."""

    blip: tuple[str, ...]
    treatment_free: tuple[str, ...]
    propensity: tuple[str, ...]


@dataclass(frozen=True)
class StageModelSpec:
    """Per-stage blip, treatment-free, and propensity term lists."""

    stages: tuple[StageTerms, ...]

    def __post_init__(self):
        for k, st in enumerate(self.stages, start=1):
            missing = set(st.blip) - set(st.treatment_free)
            if missing:
                raise SchemaMismatch(
                    f"stage {k}: blip terms {sorted(missing)} not in the treatment-free model"
                )

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    def validate(self, panel: Panel) -> None:
        """Check stage count and that every term is observable at its stage."""
        if self.n_stages != panel.n_stages:
            raise DimensionMismatch(
                f"spec has {self.n_stages} stages but panel has {panel.n_stages}"
            )
        for k, st in enumerate(self.stages, start=1):
            avail = panel.available_at(k)
            for group in (st.blip, st.treatment_free, st.propensity):
                for term in group:
                    for name in term_columns(term):
                        if name not in avail:
                            raise SchemaMismatch(
                                f"stage {k}: term {term!r} uses {name!r}, "
                                f"which is not observed by stage {k}"
                            )


@dataclass
class StageData:
    """Numeric designs for one stage, built once and row-indexed thereafter."""

    h_blip: np.ndarray
    h_tf: np.ndarray
    h_prop: np.ndarray
    a: np.ndarray

    def take(self, idx: np.ndarray) -> "StageData":
        return StageData(self.h_blip[idx], self.h_tf[idx], self.h_prop[idx], self.a[idx])


def stage_data(panel: Panel, spec: StageModelSpec) -> list[StageData]:
    """Materialize all per-stage design matrices for a panel."""
    spec.validate(panel)
    out = []
    for k, st in enumerate(spec.stages, start=1):
        out.append(
            StageData(
                h_blip=design_matrix(panel, st.blip),
                h_tf=design_matrix(panel, st.treatment_free),
                h_prop=design_matrix(panel, st.propensity),
                a=panel.a[:, k - 1],
            )
        )
    return out


@dataclass
class StageFit:
    """Estimates for one stage of the backward recursion."""

    psi: np.ndarray
    beta: np.ndarray
    xi: np.ndarray
    weights: np.ndarray
    propensity: FitResult | None = field(repr=False, default=None)


@dataclass(frozen=True)
class StageRule:
    """One stage of a regime: blip terms plus their coefficients."""

    terms: tuple[str, ...]
    psi: np.ndarray


@dataclass(frozen=True)
class Regime:
    """A deterministic treatment rule per stage: treat iff the blip is positive."""

    stages: tuple[StageRule, ...]


def blip(h_blip: np.ndarray, a: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Linear blip a * (h'psi); the reference treatment a=0 blips to zero."""
    h_blip = np.atleast_2d(np.asarray(h_blip, dtype=float))
    psi = np.asarray(psi, dtype=float)
    if h_blip.shape[1] != psi.shape[0]:
        raise DimensionMismatch(
            f"blip design has {h_blip.shape[1]} columns but psi has {psi.shape[0]}"
        )
    return np.asarray(a, dtype=float) * (h_blip @ psi)


def recommend(regime: Regime, k: int, columns: Mapping[str, np.ndarray] | Panel) -> np.ndarray:
    """Stage-k recommendations (0/1) for patients described by named columns.

    Ties (blip exactly zero) return the reference treatment 0.
    """
    rule = regime.stages[k - 1]
    if isinstance(columns, Panel):
        h = design_matrix(columns, rule.terms)
    else:
        cols = {name: np.asarray(col, dtype=float) for name, col in columns.items()}
        n = len(next(iter(cols.values())))
        parts = [np.ones(n)]
        for term in rule.terms:
            col = cols[term_columns(term)[0]].copy()
            for name in term_columns(term)[1:]:
                col = col * cols[name]
            parts.append(col)
        h = np.column_stack(parts)
    if h.shape[1] != rule.psi.shape[0]:
        raise DimensionMismatch("history row length does not match rule coefficients")
    return (h @ rule.psi > 0.0).astype(int)


def regime_from_fits(spec: StageModelSpec, fits: Sequence[StageFit]) -> Regime:
    """Bundle fitted blip coefficients into a Regime."""
    return Regime(
        tuple(StageRule(st.blip, np.asarray(f.psi, dtype=float)) for st, f in zip(spec.stages, fits))
    )


def pseudo_outcome(
    panel: Panel, spec: StageModelSpec, k: int, psi_later: Sequence[np.ndarray]
) -> np.ndarray:
    """Stage-k regression response: outcome plus later-stage regret corrections.

    psi_later supplies blip coefficients for stages k+1..K in order. Each
    later stage adds max(h'psi, 0) - a * h'psi, the shortfall of the
    observed treatment against the rule implied by psi. At the last stage
    the response is the outcome itself.
    """
    spec.validate(panel)
    expected = panel.n_stages - k
    if len(psi_later) != expected:
        raise DimensionMismatch(
            f"stage {k} of {panel.n_stages} needs {expected} later-stage coefficient vectors"
        )
    out = panel.y.copy()
    for offset, psi in enumerate(psi_later):
        j = k + 1 + offset
        h = design_matrix(panel, spec.stages[j - 1].blip)
        values = h @ np.asarray(psi, dtype=float)
        out += np.maximum(values, 0.0) - panel.a[:, j - 1] * values
    return out


def backward_pass(
    stages: Sequence[StageData],
    y: np.ndarray,
    scheme: WeightScheme,
    u_hat: np.ndarray | None = None,
    beta_u: float = 0.0,
) -> list[StageFit]:
    """Backward dWOLS sweep shared by the plain fit and the sensitivity loop.

    Each stage regresses the running pseudo-outcome and the confounder
    signal beta_u * u_hat against [treatment-free design, a * blip design]
    in a single weighted solve; the blip block of the second response is
    the plug-in bias estimate and is subtracted before the coefficients
    enter earlier-stage pseudo-outcomes. With no confounder signal the
    bias is exactly zero and the sweep reduces to plain dWOLS, and the
    StageFit.psi values are the bias-adjusted coefficients.
    """
    n = y.shape[0]
    signal = np.zeros(n) if u_hat is None else beta_u * u_hat
    fits: list[StageFit] = [None] * len(stages)
    regret = np.zeros(n)
    for k in range(len(stages), 0, -1):
        sd = stages[k - 1]
        try:
            prop = logistic_fit(sd.h_prop, sd.a)
            pi = expit(sd.h_prop @ prop.coefficients)
            w = balance_weights(pi, sd.a, scheme)
            design = np.hstack([sd.h_tf, sd.a[:, None] * sd.h_blip])
            coef = wls_multi(design, np.column_stack([y + regret, signal]), w)
        except Exception as exc:
            exc.args = (f"stage {k}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
            raise
        p_tf = sd.h_tf.shape[1]
        psi_adj = coef[p_tf:, 0] - coef[p_tf:, 1]
        fits[k - 1] = StageFit(
            psi=psi_adj,
            beta=coef[:p_tf, 0] - coef[:p_tf, 1],
            xi=prop.coefficients,
            weights=w,
            propensity=prop,
        )
        values = sd.h_blip @ psi_adj
        regret += np.maximum(values, 0.0) - sd.a * values
    return fits


def fit(panel: Panel, spec: StageModelSpec, scheme: WeightScheme = WeightScheme.OVERLAP) -> list[StageFit]:
    """Backward-recursive dWOLS estimate of all stage models.

    The last stage is fitted on the outcome; earlier stages on the
    pseudo-outcome with later-stage estimates plugged in. Errors from the
    stage fits (singular design, one treatment class) carry the stage index.
    """
    return backward_pass(stage_data(panel, spec), panel.y, scheme)
