"""Predictiveness measures, their influence functions, and cross-fitted estimation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .data import Dataset, FoldAssignment, make_folds
from .learners import LearnerSpec, default_library, rank_correlations, screen_subset, stack_arrays

MEASURES = ("auc", "r2")


class MeasureError(ValueError):
    pass


@dataclass(frozen=True)
class PredictivenessEstimate:
    """Estimated predictiveness with its per-observation influence values."""

    value: float
    eif: np.ndarray
    variance: float

    @classmethod
    def from_eif(cls, value, eif):
        eif = np.asarray(eif, dtype=float)
        return cls(float(value), eif, float(np.mean(eif ** 2) / eif.shape[0]))


def _split_labels(scores, labels):
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise MeasureError("scores and labels differ in length")
    if not np.isin(y, (0, 1)).all():
        raise MeasureError("labels must be 0/1")
    pos = y == 1
    if pos.all() or not pos.any():
        raise MeasureError("AUC needs both classes present")
    return s, pos


def auc(scores, labels) -> float:
    """Area under the ROC curve with half credit for tied pairs.

    Computed from average ranks; twice the Mann-Whitney count is an integer,
    so the result equals the pairwise count divided by ``n1 * n0`` exactly.
    """
    s, pos = _split_labels(scores, labels)
    n1 = int(pos.sum())
    n0 = s.size - n1
    twice_ranks = np.rint(2 * rankdata(s)).astype(np.int64)
    twice_u = int(twice_ranks[pos].sum()) - n1 * (n1 + 1)
    return twice_u / (2 * n1 * n0)


def auc_eif(scores, labels, auc_value: Optional[float] = None) -> np.ndarray:
    """Influence values of the AUC estimator.

    Positives get ``(F0(s_i) - AUC) / pi1`` where ``F0`` is the empirical
    probability that a negative scores below ``s_i`` (ties count half);
    negatives get ``(S1(s_i) - AUC) / pi0`` with ``S1`` the matching
    upper-tail probability among positives. The empirical mean is zero.
    """
    s, pos = _split_labels(scores, labels)
    if auc_value is None:
        auc_value = auc(s, pos.astype(int))
    neg_sorted = np.sort(s[~pos])
    pos_sorted = np.sort(s[pos])
    n1, n0 = pos_sorted.size, neg_sorted.size
    pi1 = n1 / s.size
    pi0 = n0 / s.size
    sp, sn = s[pos], s[~pos]
    below = np.searchsorted(neg_sorted, sp, side="left")
    at = np.searchsorted(neg_sorted, sp, side="right") - below
    f0 = (below + 0.5 * at) / n0
    above = n1 - np.searchsorted(pos_sorted, sn, side="right")
    at1 = np.searchsorted(pos_sorted, sn, side="right") - np.searchsorted(pos_sorted, sn, side="left")
    s1 = (above + 0.5 * at1) / n1
    eif = np.empty(s.size)
    eif[pos] = (f0 - auc_value) / pi1
    eif[~pos] = (s1 - auc_value) / pi0
    return eif


def _check_outcomes(predictions, outcomes):
    f = np.asarray(predictions, dtype=float).ravel()
    y = np.asarray(outcomes, dtype=float).ravel()
    if f.shape != y.shape:
        raise MeasureError("predictions and outcomes differ in length")
    var = np.mean((y - y.mean()) ** 2)
    if var <= 0:
        raise MeasureError("R-squared is undefined for a constant outcome")
    return f, y, var


def r_squared(predictions, outcomes) -> float:
    f, y, var = _check_outcomes(predictions, outcomes)
    return 1.0 - np.mean((y - f) ** 2) / var


def r_squared_eif(predictions, outcomes) -> np.ndarray:
    f, y, var = _check_outcomes(predictions, outcomes)
    sq = (y - f) ** 2
    mse = sq.mean()
    dev = (y - y.mean()) ** 2
    return -(sq - mse) / var + mse * (dev - var) / var ** 2


def measure_estimate(measure: str, scores, outcomes) -> PredictivenessEstimate:
    if measure == "auc":
        value = auc(scores, outcomes)
        return PredictivenessEstimate.from_eif(value, auc_eif(scores, outcomes, value))
    if measure == "r2":
        return PredictivenessEstimate.from_eif(r_squared(scores, outcomes), r_squared_eif(scores, outcomes))
    raise MeasureError(f"unknown measure '{measure}'; choose from {MEASURES}")


def resolve_measure(measure: str, dataset: Dataset) -> str:
    if measure == "auto":
        return "auc" if dataset.is_binary else "r2"
    if measure not in MEASURES:
        raise MeasureError(f"unknown measure '{measure}'; choose from {MEASURES}")
    if measure == "auc" and not dataset.is_binary:
        raise MeasureError("AUC requires a binary outcome")
    return measure


class CrossFitter:
    """Held-out predictions for feature subsets under a fixed fold assignment.

    Each subset is screened on the training rows of every fold, and fitted
    stacks are cached by ``(fold, screened subset)`` so subsets that screen to
    the same columns are fit once.
    """

    def __init__(self, dataset: Dataset, folds: FoldAssignment, learners=None,
                 K_inner: int = 3, seed: int = 0, screen: bool = True):
        dataset.require_complete()
        if K_inner < 2:
            raise ValueError("K_inner must be at least 2")
        self.dataset = dataset
        self.folds = folds
        self.binary = dataset.is_binary
        self.learners = list(learners) if learners is not None else default_library(self.binary)
        self.screen = screen
        self._cache = {}
        X, y = dataset.features, dataset.outcome
        inner_seeds = np.random.SeedSequence(seed).spawn(folds.K)
        self._fold_data = []
        for v in range(1, folds.K + 1):
            train, test = folds.train_test(v)
            y_train = y[train]
            inner = make_folds(y_train, K_inner, int(inner_seeds[v - 1].generate_state(1)[0])).folds
            corr = np.abs(rank_correlations(X[train], y_train)) if screen else None
            self._fold_data.append((train, test, y_train, inner, corr))

    def screened(self, subset) -> list:
        subset = tuple(sorted(int(j) for j in subset))
        if not self.screen:
            return [subset] * self.folds.K
        return [screen_subset(subset, fd[4]) for fd in self._fold_data]

    def _fold_predictions(self, v, key):
        hit = self._cache.get((v, key))
        if hit is not None:
            return hit
        train, test, y_train, inner, _ = self._fold_data[v]
        X = self.dataset.features
        cols = list(key)
        kept, w = stack_arrays(self.learners, X[np.ix_(train, cols)], y_train, self.binary, inner)
        X_test = X[np.ix_(test, cols)]
        pred = np.column_stack([est.predict(X_test) for _, est in kept]) @ w
        self._cache[(v, key)] = pred
        return pred

    def predictions(self, subset) -> np.ndarray:
        """Pooled held-out predictions for ``subset`` (0-based columns)."""
        subset = tuple(sorted(int(j) for j in subset))
        out = np.empty(self.dataset.n)
        if not subset:
            # the constant model: every fold predicts the same outcome mean
            out[:] = self.dataset.outcome.mean()
            return out
        for v, key in enumerate(self.screened(subset)):
            out[self._fold_data[v][1]] = self._fold_predictions(v, key)
        return out

    def estimate(self, subset, measure: str) -> PredictivenessEstimate:
        return measure_estimate(measure, self.predictions(subset), self.dataset.outcome)

    @property
    def n_fits(self) -> int:
        return len(self._cache)


def cv_predictiveness(dataset: Dataset, subset=(), learners: Optional[Sequence[LearnerSpec]] = None,
                      folds: Optional[FoldAssignment] = None, seed: int = 0, measure: str = "auto",
                      K: int = 5, K_inner: int = 3) -> PredictivenessEstimate:
    """Cross-fitted predictiveness of the features in ``subset``.

    For each fold the subset is screened on the training rows, a stack is fit
    on them, and the held-out fold is scored; the measure and its influence
    values are computed on the pooled held-out scores.
    """
    measure = resolve_measure(measure, dataset)
    if folds is None:
        folds = make_folds(dataset, K, seed)
    fitter = CrossFitter(dataset, folds, learners, K_inner=K_inner, seed=seed)
    return fitter.estimate(subset, measure)
