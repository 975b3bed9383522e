"""Per-replicate performance of a selected feature set."""

from __future__ import annotations

from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

from ..data import Dataset
from ..learners import LearnerSpec, evaluation_library, fit_stack
from ..predictiveness import auc
from .scenarios import ScenarioSpec, gen_scenario


def sensitivity(selected, truth) -> float:
    """Share of truly active features that were selected (1 when there are none)."""
    truth = set(truth)
    if not truth:
        return 1.0
    return len(truth & set(selected)) / len(truth)


def specificity(selected, truth, p: int) -> float:
    """Share of inactive features left out (1 when every feature is active)."""
    null = set(range(p)) - set(truth)
    if not null:
        return 1.0
    return len(null - set(selected)) / len(null)


def false_selections(selected, truth) -> int:
    return len(set(selected) - set(truth))


def false_discovery_proportion(selected, truth) -> float:
    """Fraction of selections that are false, with 0/0 taken as 0."""
    if not selected:
        return 0.0
    return false_selections(selected, truth) / len(selected)


def test_auc(selected, training_sets: Sequence[Dataset], test: Dataset,
             learners: Optional[Sequence[LearnerSpec]] = None, K_inner: int = 3,
             seed: int = 0) -> float:
    """Test-set AUC averaged over stacks refit on each training set.

    An empty selection gives the constant model and AUC 0.5.
    """
    selected = tuple(sorted(selected))
    if not selected:
        return 0.5
    specs = list(learners) if learners is not None else evaluation_library(True)
    seeds = np.random.SeedSequence(seed).spawn(len(training_sets))
    y = test.outcome.astype(int)
    values = []
    for ds, ss in zip(training_sets, seeds):
        model = fit_stack(specs, ds, selected, K_inner=K_inner, seed=int(ss.generate_state(1)[0]))
        values.append(auc(model.predict(test.features), y))
    return float(np.mean(values))


test_auc.__test__ = False


def evaluate(selected, truth, spec: ScenarioSpec, training_sets: Sequence[Dataset],
             test: Optional[Dataset] = None, test_n: int = 10_000,
             learners: Optional[Sequence[LearnerSpec]] = None, seed: int = 0,
             K_inner: int = 3) -> dict:
    """Metrics for one replicate: test AUC, sensitivity, specificity and error counts."""
    if test is None:
        if test_n < 1000:
            raise ValueError("test_n must be at least 1000")
        test, _ = gen_scenario(replace_missing(spec), test_n, seed)
    return {
        "test_auc": test_auc(selected, training_sets, test, learners, K_inner, seed),
        **selection_metrics(selected, truth, spec.p),
    }


def selection_metrics(selected, truth, p: int) -> dict:
    """Selection accuracy of one replicate, without any model refitting."""
    return {
        "sensitivity": sensitivity(selected, truth),
        "specificity": specificity(selected, truth, p),
        "n_false": false_selections(selected, truth),
        "fdp": false_discovery_proportion(selected, truth),
        "n_selected": len(selected),
    }


def replace_missing(spec: ScenarioSpec) -> ScenarioSpec:
    """The same scenario without amputation."""
    return replace(spec, missing_prop=0.0)
