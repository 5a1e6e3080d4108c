"""File formats: panel CSV, JSON model/prior specs, and result bundles.

Panel CSV layout: an integer ``id`` column, then per stage its covariate
columns followed by the stage's treatment column ``a<k>``, then the outcome
``y``. Floats are written with shortest round-trip precision so repeated
runs are byte-identical. JSON spec files carry a ``schema_version`` field
and reject unknown keys.

All writers go through an atomic temp-file-plus-rename so an interrupted
run never leaves a partial file at the final path.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path
from typing import Mapping

import numpy as np

from .confound import Link, NormalPrior, PriorSpec
from .dwols import Panel, StageModelSpec, StageTerms, treatment_name
from .errors import ConfigError, SchemaMismatch

SCHEMA_VERSION = 1


def atomic_write(path: str | Path, text: str) -> None:
    """Write text to path via a temp file and rename; never leaves partials."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(value: float) -> str:
    return repr(float(value))


def panel_header(panel: Panel) -> list[str]:
    header = ["id"]
    for k, block in enumerate(panel.stages, start=1):
        header.extend(block)
        header.append(treatment_name(k))
    header.append("y")
    return header


def write_panel_csv(path: str | Path, panel: Panel, ids: np.ndarray | None = None) -> None:
    """Serialize a panel; row ids default to 1..n."""
    if ids is None:
        ids = np.arange(1, panel.n + 1)
    header = panel_header(panel)
    columns = []
    for name in header[1:-1]:
        if name.startswith("a") and name[1:].isdigit():
            columns.append(panel.a[:, int(name[1:]) - 1])
        else:
            columns.append(panel.column(name))
    lines = [",".join(header)]
    for i in range(panel.n):
        row = [str(int(ids[i]))]
        for name, col in zip(header[1:-1], columns):
            row.append(str(int(col[i])) if name.startswith("a") and name[1:].isdigit() else _fmt(col[i]))
        row.append(_fmt(panel.y[i]))
        lines.append(",".join(row))
    atomic_write(path, "\n".join(lines) + "\n")


def write_latent_csv(path: str | Path, u: np.ndarray, ids: np.ndarray | None = None) -> None:
    """Serialize a latent confounder draw next to (never inside) a panel."""
    if ids is None:
        ids = np.arange(1, len(u) + 1)
    lines = ["id,u"]
    lines.extend(f"{int(i)},{_fmt(v)}" for i, v in zip(ids, u))
    atomic_write(path, "\n".join(lines) + "\n")


def read_panel_csv(path: str | Path) -> tuple[Panel, np.ndarray]:
    """Parse a panel CSV back into (Panel, ids).

    The stage structure is recovered from the header: covariates between
    treatment columns a1..aK belong to the following stage. Malformed cells
    raise SchemaMismatch naming the offending row.
    """
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaMismatch(f"{path}: empty file") from None
        rows = list(reader)
    if not header or header[0] != "id" or header[-1] != "y":
        raise SchemaMismatch(f"{path}: header must start with 'id' and end with 'y'")
    treat_cols = [h for h in header if h.startswith("a") and h[1:].isdigit()]
    expected = [treatment_name(k) for k in range(1, len(treat_cols) + 1)]
    if treat_cols != expected:
        raise SchemaMismatch(f"{path}: treatment columns {treat_cols} are not consecutive a1..aK")
    if not treat_cols:
        raise SchemaMismatch(f"{path}: no treatment columns a1..aK found")

    stages: list[tuple[str, ...]] = []
    block: list[str] = []
    for name in header[1:-1]:
        if name in treat_cols:
            stages.append(tuple(block))
            block = []
        else:
            block.append(name)
    if block:
        raise SchemaMismatch(f"{path}: covariates {block} appear after the last treatment column")

    n = len(rows)
    data = np.empty((n, len(header)))
    for i, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise SchemaMismatch(f"{path}: row {i} has {len(row)} fields, want {len(header)}")
        try:
            data[i - 2] = [float(cell) for cell in row]
        except ValueError as exc:
            raise SchemaMismatch(f"{path}: row {i}: {exc}") from None
    ids = data[:, 0].astype(int)
    covs: dict[str, np.ndarray] = {}
    a_cols = []
    for j, name in enumerate(header[1:-1], start=1):
        if name in treat_cols:
            a_cols.append(data[:, j])
        else:
            covs[name] = data[:, j]
    panel = Panel(
        covariates=covs,
        stages=tuple(stages),
        a=np.column_stack(a_cols) if a_cols else np.empty((n, 0)),
        y=data[:, -1],
    )
    return panel, ids


def read_table_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Read a plain covariate table (header + numeric columns)."""
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaMismatch(f"{path}: empty file") from None
        rows = list(reader)
    data = np.empty((len(rows), len(header)))
    for i, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise SchemaMismatch(f"{path}: row {i} has {len(row)} fields, want {len(header)}")
        try:
            data[i - 2] = [float(cell) for cell in row]
        except ValueError as exc:
            raise SchemaMismatch(f"{path}: row {i}: {exc}") from None
    return {name: data[:, j] for j, name in enumerate(header) if name != "id"}


def _require_keys(obj: Mapping, allowed: set[str], required: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise ConfigError(f"{where}: missing keys {sorted(missing)}")


def _check_version(obj: Mapping, where: str) -> None:
    if obj.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(
            f"{where}: schema_version must be {SCHEMA_VERSION}, got {obj.get('schema_version')!r}"
        )


def load_json(path: str | Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def model_spec_from_json(path: str | Path) -> StageModelSpec:
    """Load a per-stage model spec.

    Layout::

        {"schema_version": 1,
         "stages": [{"blip": [...], "treatment_free": [...], "propensity": [...]}, ...]}
    """
    obj = load_json(path)
    _require_keys(obj, {"schema_version", "stages"}, {"schema_version", "stages"}, str(path))
    _check_version(obj, str(path))
    if not isinstance(obj["stages"], list) or not obj["stages"]:
        raise ConfigError(f"{path}: 'stages' must be a non-empty list")
    stages = []
    for k, st in enumerate(obj["stages"], start=1):
        where = f"{path}: stages[{k - 1}]"
        _require_keys(st, {"blip", "treatment_free", "propensity"}, {"blip", "treatment_free", "propensity"}, where)
        stages.append(
            StageTerms(
                blip=tuple(st["blip"]),
                treatment_free=tuple(st["treatment_free"]),
                propensity=tuple(st["propensity"]),
            )
        )
    try:
        return StageModelSpec(tuple(stages))
    except SchemaMismatch as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _prior_from_json(obj: Mapping, where: str) -> NormalPrior:
    _require_keys(obj, {"mean", "variance"}, {"mean", "variance"}, where)
    return NormalPrior(mean=float(obj["mean"]), variance=float(obj["variance"]))


def confounder_from_json(path: str | Path) -> tuple[tuple[str, ...], Link, PriorSpec]:
    """Load a confounder model plus priors.

    Layout::

        {"schema_version": 1,
         "confounder": {"terms": [...], "link": "identity" | "logit"},
         "priors": {"zeta": [{"mean": ..., "variance": ...}, ...],
                    "beta_u": {"mean": ..., "variance": ...}}}

    The zeta prior list covers the implied intercept first, then one entry
    per term.
    """
    obj = load_json(path)
    _require_keys(obj, {"schema_version", "confounder", "priors"}, {"schema_version", "confounder", "priors"}, str(path))
    _check_version(obj, str(path))
    conf = obj["confounder"]
    _require_keys(conf, {"terms", "link"}, {"terms", "link"}, f"{path}: confounder")
    try:
        link = Link(conf["link"])
    except ValueError:
        raise ConfigError(f"{path}: confounder.link must be 'identity' or 'logit'") from None
    terms = tuple(str(t) for t in conf["terms"])
    priors = obj["priors"]
    _require_keys(priors, {"zeta", "beta_u"}, {"zeta", "beta_u"}, f"{path}: priors")
    zeta = tuple(
        _prior_from_json(z, f"{path}: priors.zeta[{i}]") for i, z in enumerate(priors["zeta"])
    )
    if len(zeta) != len(terms) + 1:
        raise ConfigError(
            f"{path}: priors.zeta has {len(zeta)} entries, want {len(terms) + 1} "
            "(intercept plus one per term)"
        )
    beta_u = _prior_from_json(priors["beta_u"], f"{path}: priors.beta_u")
    return terms, link, PriorSpec(zeta=zeta, beta_u=beta_u)


def confounder_spec_to_json(terms, link, prior: PriorSpec) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "confounder": {"terms": list(terms), "link": link.value},
        "priors": {
            "zeta": [{"mean": p.mean, "variance": p.variance} for p in prior.zeta],
            "beta_u": {"mean": prior.beta_u.mean, "variance": prior.beta_u.variance},
        },
    }


def write_json(path: str | Path, payload: dict) -> None:
    atomic_write(path, json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    raise TypeError(f"cannot serialize {type(value)}")


def write_csv(path: str | Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(c) if isinstance(c, float) else str(c) for c in row))
    atomic_write(path, "\n".join(lines) + "\n")
