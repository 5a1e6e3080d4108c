"""Simulation laboratory: data-generating processes with a latent
confounder, prior scenarios, plasmode generation, true-regime oracles, and
the study driver that scores estimators against the truth."""

from .dgp import (
    OneStageDgp,
    TwoStageDgp,
    confounder_truth,
    default_model_spec,
    gen_one_stage,
    gen_panel,
    gen_two_stage,
    stage1_truth,
    true_psi,
    true_regime,
)
from .plasmode import PlasmodeModel, plasmode, plasmode_coverage_study, synthetic_ehr_table
from .scenarios import Scenario, scenario_priors
from .study import StudyConfig, StudyMetrics, proportion_optimal, run_study

__all__ = [
    "OneStageDgp",
    "TwoStageDgp",
    "gen_one_stage",
    "gen_two_stage",
    "gen_panel",
    "true_regime",
    "true_psi",
    "stage1_truth",
    "confounder_truth",
    "default_model_spec",
    "Scenario",
    "scenario_priors",
    "StudyConfig",
    "StudyMetrics",
    "proportion_optimal",
    "run_study",
    "PlasmodeModel",
    "plasmode",
    "plasmode_coverage_study",
    "synthetic_ehr_table",
]
