"""Command-line front end.

Subcommands: ``simulate`` writes synthetic panels, ``sensa`` runs the
sensitivity analysis plus confidence intervals on a panel CSV, ``study``
reproduces the simulation studies, and ``plasmode`` writes plasmode data
sets from a real covariate table. Every result bundle embeds the resolved
configuration, seed, and package version so a run can be reproduced from
its own output.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, mcsa, mnboot, simlab
from .confound import ConfounderSpec, Link
from .dwols import fit as dwols_fit
from .errors import ConfigError, DtrsenseError, SchemaMismatch
from .fileio import (
    SCHEMA_VERSION,
    confounder_from_json,
    confounder_spec_to_json,
    load_json,
    model_spec_from_json,
    read_panel_csv,
    read_table_csv,
    write_csv,
    write_json,
    write_latent_csv,
    write_panel_csv,
)
from .linmodel import WeightScheme
from .simlab import OneStageDgp, Scenario, StudyConfig, TwoStageDgp
from .simlab.plasmode import PlasmodeModel, plasmode

DGP_CHOICES = ("one-stage", "two-stage")


def _utc_now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def _weights(name: str) -> WeightScheme:
    return WeightScheme.IPTW if name == "iptw" else WeightScheme.OVERLAP


def _positive_int(name: str, value: int, minimum: int = 1) -> int:
    if value < minimum:
        raise ConfigError(f"--{name} must be at least {minimum}, got {value}")
    return value


def _build_dgp(kind: str, config_path: str | None):
    cls = OneStageDgp if kind == "one-stage" else TwoStageDgp
    if config_path is None:
        return cls()
    obj = load_json(config_path)
    if obj.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"{config_path}: schema_version must be {SCHEMA_VERSION}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    overrides = {}
    for key, value in obj.items():
        if key == "schema_version":
            continue
        if key not in fields:
            raise ConfigError(f"{config_path}: unknown key {key!r} for {kind} process")
        overrides[key] = tuple(value) if isinstance(value, list) else value
    try:
        return cls(**overrides)
    except (TypeError, DtrsenseError) as exc:
        raise ConfigError(f"{config_path}: {exc}") from None


def _bundle_skeleton(args: argparse.Namespace, command: str) -> dict:
    echo = {k: v for k, v in vars(args).items() if k != "func"}
    return {
        "command": command,
        "config": echo,
        "version": __version__,
        "started": _utc_now(),
    }


def cmd_simulate(args: argparse.Namespace) -> int:
    _positive_int("n", args.n)
    dgp = _build_dgp(args.dgp, args.dgp_config)
    panel, u = simlab.gen_panel(dgp, args.n, args.seed)
    write_panel_csv(args.out, panel)
    if args.emit_latent:
        write_latent_csv(args.emit_latent, u)
    print(f"wrote {args.n} rows to {args.out}")
    return 0


def _coefficient_names(terms) -> list[str]:
    return ["(intercept)", *terms]


def cmd_sensa(args: argparse.Namespace) -> int:
    _positive_int("B", args.B)
    panel, _ = read_panel_csv(args.panel)
    spec = model_spec_from_json(args.model)
    terms, link, prior = confounder_from_json(args.confounder)
    bundle = _bundle_skeleton(args, "sensa")
    scheme = _weights(args.weights)

    mc_cfg = mcsa.McsaConfig(
        reps=args.B, seed=args.seed, confounder_terms=terms, link=link,
        prior=prior, scheme=scheme,
    )
    ci_cfg = mnboot.CiConfig(
        reps=args.B, seed=args.seed + 1, kappa=args.kappa, nu=args.nu,
        vartheta=args.vartheta, sigma_method=args.sigma,
    )
    plain = dwols_fit(panel, spec, scheme)
    sens = mcsa.run(panel, spec, mc_cfg)
    report = mnboot.intervals(panel, spec, mc_cfg, ci_cfg, mcsa_fit=sens)

    rows = []
    for k, st in enumerate(spec.stages, start=1):
        names = _coefficient_names(st.blip)
        for j, name in enumerate(names):
            rows.append(
                [
                    k,
                    name,
                    float(plain[k - 1].psi[j]),
                    float(sens.psi_adj[k - 1][j]),
                    float(report.lower[k - 1][j]),
                    float(report.upper[k - 1][j]),
                ]
            )
    header = ["stage", "coefficient", "unadjusted", "adjusted", "ci_low", "ci_high"]
    out_prefix = Path(args.out_prefix)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    write_csv(f"{out_prefix}.csv", header, rows)

    width = max(len(r[1]) for r in rows)
    table = [f"{'stage':>5}  {'coefficient':<{width}}  {'unadjusted':>12}  {'adjusted':>12}  {'ci_low':>12}  {'ci_high':>12}"]
    for r in rows:
        table.append(
            f"{r[0]:>5}  {r[1]:<{width}}  {r[2]:>12.4f}  {r[3]:>12.4f}  {r[4]:>12.4f}  {r[5]:>12.4f}"
        )
    text = "\n".join(table)
    if prior.degenerate_no_confounding:
        text += "\nno-confounding check: priors pin the outcome effect to zero; adjusted equals unadjusted up to bootstrap noise"
    print(text)

    bundle.update(
        {
            "confounder": confounder_spec_to_json(terms, link, prior),
            "results": {
                "unadjusted": [f.psi for f in plain],
                "adjusted": sens.psi_adj,
                "lower": report.lower,
                "upper": report.upper,
                "p_hat": report.p_hat,
                "p_hat_global": report.p_hat_global,
                "m_hat": report.m_hat,
                "m_hat_global": report.m_hat_global,
                "failures": report.failures,
            },
            "finished": _utc_now(),
        }
    )
    write_json(f"{out_prefix}.json", bundle)
    return 0


def cmd_study(args: argparse.Namespace) -> int:
    if args.full_paper_scale:
        args.reps, args.B = 1000, 500
    _positive_int("reps", args.reps)
    _positive_int("B", args.B)
    _positive_int("n", args.n, minimum=2)
    dgp = _build_dgp(args.dgp, args.dgp_config)
    try:
        scenarios = tuple(
            Scenario(s.strip()) for s in args.scenarios.split(",") if s.strip()
        ) if args.scenarios != "all" else tuple(Scenario)
    except ValueError as exc:
        raise ConfigError(f"--scenarios: {exc}") from None
    bundle = _bundle_skeleton(args, "study")

    cfg = StudyConfig(
        dgp=dgp,
        scenarios=scenarios,
        reps=args.reps,
        n=args.n,
        mc_reps=args.B,
        seed=args.seed,
        scheme=_weights(args.weights),
        kappa=args.kappa,
        nu=args.nu,
        vartheta=args.vartheta,
        sigma_method=args.sigma,
        rollout=args.rollout,
        workers=args.threads,
    )
    metrics = simlab.run_study(cfg)
    truth = simlab.true_psi(dgp)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = ["scenario", "stage", "coefficient", "true_value", "rmse", "coverage", "mean_width", "proportion_optimal"]
    rows = []
    spec = simlab.default_model_spec(dgp)
    results_json: dict = {}
    for scenario, m in metrics.items():
        for k, st in enumerate(spec.stages, start=1):
            names = _coefficient_names(st.blip)
            for j, name in enumerate(names):
                rows.append(
                    [
                        scenario.value,
                        k,
                        name,
                        float(truth[k - 1][j]),
                        float(m.rmse[k - 1][j]),
                        float(m.coverage[k - 1][j]),
                        float(m.mean_width[k - 1][j]),
                        float(m.proportion_optimal[k - 1]),
                    ]
                )
        est_header = [
            f"stage{k}_{name}"
            for k, st in enumerate(spec.stages, start=1)
            for name in _coefficient_names(st.blip)
        ]
        est_rows = [
            [float(v) for k in range(len(spec.stages)) for v in m.points[k][r]]
            for r in range(m.reps_used)
        ]
        write_csv(out_dir / f"estimates_{scenario.value}.csv", est_header, est_rows)
        results_json[scenario.value] = {
            "reps_used": m.reps_used,
            "failures": m.failures,
            "rmse": m.rmse,
            "coverage": m.coverage,
            "mean_width": m.mean_width,
            "proportion_optimal": m.proportion_optimal,
        }
    write_csv(out_dir / "metrics.csv", header, rows)
    bundle.update({"truth": truth, "results": results_json, "finished": _utc_now()})
    write_json(out_dir / "bundle.json", bundle)
    print(f"wrote study outputs to {out_dir}")
    return 0


def _plasmode_model_from_json(path: str) -> tuple[PlasmodeModel, ConfounderSpec]:
    obj = load_json(path)
    allowed = {"schema_version", "treatment", "treatment_free", "blip", "beta", "psi", "beta_u", "confounder"}
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    missing = allowed - set(obj)
    if missing:
        raise ConfigError(f"{path}: missing keys {sorted(missing)}")
    if obj["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"{path}: schema_version must be {SCHEMA_VERSION}")
    conf = obj["confounder"]
    for key in ("terms", "link", "zeta"):
        if key not in conf:
            raise ConfigError(f"{path}: confounder is missing {key!r}")
    try:
        model = PlasmodeModel(
            treatment=obj["treatment"],
            treatment_free=tuple(obj["treatment_free"]),
            blip=tuple(obj["blip"]),
            beta=np.asarray(obj["beta"], dtype=float),
            psi=np.asarray(obj["psi"], dtype=float),
            beta_u=float(obj["beta_u"]),
        )
        spec = ConfounderSpec(
            terms=tuple(conf["terms"]),
            link=Link(conf["link"]),
            zeta=np.asarray(conf["zeta"], dtype=float),
            beta_u=float(obj["beta_u"]),
        )
    except (ValueError, DtrsenseError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return model, spec


def cmd_plasmode(args: argparse.Namespace) -> int:
    _positive_int("n-sets", args.n_sets)
    if args.noise_sd < 0:
        raise ConfigError("--noise-sd must be non-negative")
    table = read_table_csv(args.covariates)
    model, conf = _plasmode_model_from_json(args.outcome_model)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    bundle = _bundle_skeleton(args, "plasmode")
    for i, (panel, u) in enumerate(
        plasmode(table, model, conf, args.noise_sd, args.n_sets, args.seed)
    ):
        write_panel_csv(out_dir / f"plasmode_{i:04d}.csv", panel)
        if args.emit_latent:
            write_latent_csv(out_dir / f"latent_{i:04d}.csv", u)
    bundle.update({"true_psi": model.psi, "n_sets": args.n_sets, "finished": _utc_now()})
    write_json(out_dir / "bundle.json", bundle)
    print(f"wrote {args.n_sets} plasmode sets to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dtrsense",
        description="Treatment-rule estimation with sensitivity analysis for an unmeasured confounder",
    )
    parser.add_argument("--version", action="version", version=f"dtrsense {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=0, help="master seed")
        p.add_argument("--threads", type=int, default=1, help="worker count; results do not depend on it")

    p = sub.add_parser("simulate", help="write a synthetic panel CSV")
    common(p)
    p.add_argument("--dgp", choices=DGP_CHOICES, required=True)
    p.add_argument("--dgp-config", default=None, help="JSON file of process parameter overrides")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--emit-latent", default=None, metavar="PATH", help="also write the latent confounder")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sensa", help="sensitivity analysis + intervals on a panel CSV")
    common(p)
    p.add_argument("--panel", required=True)
    p.add_argument("--model", required=True, help="per-stage model spec JSON")
    p.add_argument("--confounder", required=True, help="confounder model + priors JSON")
    p.add_argument("--B", type=int, default=500, help="bootstrap/Monte Carlo repetitions")
    p.add_argument("--weights", choices=("iptw", "overlap"), default="overlap")
    p.add_argument("--kappa", type=float, default=0.05)
    p.add_argument("--nu", type=float, default=0.05)
    p.add_argument("--vartheta", type=float, default=0.05)
    p.add_argument("--sigma", choices=mnboot.SIGMA_METHODS, default="bootstrap")
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_sensa)

    p = sub.add_parser("study", help="simulation study with scoring against the truth")
    common(p)
    p.add_argument("--dgp", choices=DGP_CHOICES, required=True)
    p.add_argument("--dgp-config", default=None)
    p.add_argument("--scenarios", default="all", help="comma-separated scenario names or 'all'")
    p.add_argument("--reps", type=int, default=200, help="study repetitions")
    p.add_argument("--B", type=int, default=200)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--weights", choices=("iptw", "overlap"), default="overlap")
    p.add_argument("--kappa", type=float, default=0.05)
    p.add_argument("--nu", type=float, default=0.05)
    p.add_argument("--vartheta", type=float, default=0.05)
    p.add_argument("--sigma", choices=mnboot.SIGMA_METHODS, default="bootstrap")
    p.add_argument("--rollout", choices=("truth", "observed"), default="truth")
    p.add_argument("--full-paper-scale", action="store_true", help="reps=1000, B=500")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("plasmode", help="plasmode data sets from a covariate table")
    common(p)
    p.add_argument("--covariates", required=True, help="covariate table CSV")
    p.add_argument("--outcome-model", required=True, help="outcome + confounder model JSON")
    p.add_argument("--noise-sd", type=float, default=1.0)
    p.add_argument("--n-sets", type=int, required=True)
    p.add_argument("--emit-latent", action="store_true")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_plasmode)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SchemaMismatch as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except DtrsenseError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
