"""Simulation scenarios, replicate metrics and experiment runner."""

from .experiment import ExperimentConfig, ExperimentConfigError, ModeSpec, run_experiment, run_replicate
from .metrics import evaluate, false_discovery_proportion, selection_metrics, sensitivity, specificity, test_auc
from .scenarios import (
    SCENARIOS,
    ScenarioError,
    ScenarioSpec,
    amputation_spec,
    covariance,
    gen_scenario,
    optimal_auc,
    scenario_spec,
)

__all__ = [
    "SCENARIOS", "ExperimentConfig", "ExperimentConfigError", "ModeSpec", "ScenarioError",
    "ScenarioSpec", "amputation_spec", "covariance", "evaluate", "false_discovery_proportion",
    "gen_scenario", "optimal_auc", "run_experiment", "run_replicate", "scenario_spec",
    "selection_metrics", "sensitivity", "specificity", "test_auc",
]
