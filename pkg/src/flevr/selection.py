"""Intrinsic variable selection: tests on pooled importances, Holm initial
set, and augmentation for gFWER(k), PFP(q) and FDR control."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm
from sklearn.base import BaseEstimator
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.validation import check_is_fitted

from .data import Dataset
from .learners import LearnerSpec
from .missingness import PooledEstimate, mice_impute, pool_rubin, single_estimate
from .spvim import estimate_spvim

MODES = ("gfwer", "pfp", "fdr")


class SelectionError(ValueError):
    pass


@dataclass(frozen=True)
class TestResults:
    """Per-feature statistics; ``flags`` marks zero-variance features."""

    __test__ = False

    t_stats: np.ndarray
    p_values: np.ndarray
    p_adjusted: np.ndarray
    flags: tuple = ()


@dataclass(frozen=True)
class SelectionResult:
    """Selected features (0-based internally; 1-based in :meth:`to_dict`)."""

    initial_set: tuple
    augmentation_set: tuple
    final_set: tuple
    alpha: float
    mode: str
    k_used: int
    q_used: Optional[float] = None
    f_used: Optional[float] = None
    tests: Optional[TestResults] = None
    seed: Optional[int] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "initial_set": [j + 1 for j in self.initial_set],
            "augmentation_set": [j + 1 for j in self.augmentation_set],
            "final_set": [j + 1 for j in self.final_set],
            "alpha": self.alpha,
            "mode": self.mode,
            "k_used": self.k_used,
            "q_used": self.q_used,
            "f_used": self.f_used,
            "seed": self.seed,
        }
        if self.tests is not None:
            out["t_stats"] = self.tests.t_stats.tolist()
            out["p_values"] = self.tests.p_values.tolist()
            out["p_adjusted"] = self.tests.p_adjusted.tolist()
            out["zero_variance_features"] = [j + 1 for j in self.tests.flags]
        out.update(self.extra)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def holm_adjust(p_values) -> np.ndarray:
    """Holm step-down adjusted p-values.

    The ``j``-th smallest raw p-value (ties ordered by index) is multiplied
    by ``p - j + 1``, capped at 1, and a running maximum is taken.
    """
    pv = np.asarray(p_values, dtype=float)
    if pv.ndim != 1:
        raise SelectionError("p-values must be a vector")
    if np.any((pv < 0) | (pv > 1)) or np.isnan(pv).any():
        raise SelectionError("p-values must lie in [0, 1]")
    p = pv.size
    order = np.argsort(pv, kind="stable")
    scaled = np.minimum(pv[order] * (p - np.arange(p)), 1.0)
    out = np.empty(p)
    out[order] = np.maximum.accumulate(scaled)
    return out


def test_statistics(pooled: PooledEstimate) -> TestResults:
    """One-sided Wald tests of zero importance against positive importance."""
    psi = np.asarray(pooled.psi_bar, dtype=float)
    var = np.asarray(pooled.total_var, dtype=float)
    t = np.empty_like(psi)
    pv = np.empty_like(psi)
    pos = var > 0
    t[pos] = psi[pos] / np.sqrt(var[pos])
    pv[pos] = norm.sf(t[pos])
    zero = ~pos
    t[zero] = np.sign(psi[zero]) * np.where(psi[zero] == 0, 0.0, np.inf)
    pv[zero] = np.where(psi[zero] == 0, 1.0, np.where(psi[zero] > 0, 0.0, 1.0))
    flags = tuple(int(j) for j in np.flatnonzero(zero))
    return TestResults(t, pv, holm_adjust(pv), flags)


test_statistics.__test__ = False


def initial_set(adjusted, alpha: float) -> tuple:
    if not 0 < alpha < 1:
        raise SelectionError("alpha must lie in (0, 1)")
    return tuple(int(j) for j in np.flatnonzero(np.asarray(adjusted) < alpha))


def pfp_k(q: float, R: int, p: int) -> int:
    """Largest ``j <= p - R`` with ``j / (j + R) <= q`` (0 when ``R = 0``)."""
    if not 0 < q < 1:
        raise SelectionError("q must lie in (0, 1)")
    if R == 0:
        return 0
    # j/(j+R) <= q  <=>  j <= qR/(1-q); integer arithmetic check guards rounding
    j = min(p - R, int(math.floor(q * R / (1 - q))) + 1)
    while j > 0 and j > q * (j + R):
        j -= 1
    return max(j, 0)


def augment(adjusted, initial: Sequence[int], mode: str, alpha: float = 0.05,
            k: Optional[int] = None, q: Optional[float] = None,
            f: Optional[float] = None) -> SelectionResult:
    """Add the best unselected features to the initial set.

    ``gfwer`` adds ``k`` features; ``pfp`` chooses ``k`` from ``q`` and the
    initial set size; ``fdr`` maps ``f`` to ``q = (f - alpha) / (1 - alpha)``
    and follows the ``pfp`` path.
    """
    adj = np.asarray(adjusted, dtype=float)
    p = adj.size
    init = tuple(sorted(int(j) for j in initial))
    R = len(init)
    f_used = None
    if mode == "gfwer":
        if k is None or not 0 <= k <= p - R:
            raise SelectionError(f"k must lie in [0, {p - R}]")
        k_used, q_used = int(k), None
    elif mode in ("pfp", "fdr"):
        if mode == "fdr":
            if f is None or not alpha < f < 1:
                raise SelectionError("f must lie in (alpha, 1)")
            f_used = float(f)
            q = (f - alpha) / (1 - alpha)
        if q is None:
            raise SelectionError("q is required")
        k_used, q_used = pfp_k(q, R, p), float(q)
    else:
        raise SelectionError(f"unknown mode '{mode}'; choose from {MODES}")
    chosen = set(init)
    rest = [j for j in range(p) if j not in chosen]
    rest.sort(key=lambda j: (adj[j], j))
    aug = tuple(sorted(rest[:k_used]))
    return SelectionResult(
        initial_set=init, augmentation_set=aug, final_set=tuple(sorted(init + aug)),
        alpha=float(alpha), mode=mode, k_used=k_used, q_used=q_used, f_used=f_used,
    )


def choose_k_q(n: int, p: int, s0: int, target_specificity: float) -> tuple[int, float]:
    """``k`` and ``q`` giving a target specificity; ``q`` is not rounded."""
    if not 0 < target_specificity < 1:
        raise SelectionError("target specificity must lie in (0, 1)")
    if not 0 <= s0 < p:
        raise SelectionError("s0 must lie in [0, p)")
    # rounding before the ceiling absorbs representation error such as 0.1 * 30
    k = math.ceil(round((1 - target_specificity) * (p - s0), 9))
    q = k / ((p - s0) / p * math.sqrt(n / 200) + k)
    return int(k), q


@dataclass
class SelectionConfig:
    """Settings for :func:`select`.

    ``k``, ``q`` or ``f`` is required according to ``mode``.
    """

    measure: str = "auto"
    learners: Optional[Sequence[LearnerSpec]] = None
    K: int = 5
    budget: Optional[int] = None
    M: int = 10
    alpha: float = 0.05
    mode: str = "gfwer"
    k: Optional[int] = 0
    q: Optional[float] = None
    f: Optional[float] = None
    K_inner: int = 3
    max_iter: int = 20
    donors: int = 5
    n_jobs: int = 1

    def validate(self):
        if not 0 < self.alpha < 1:
            raise SelectionError("alpha must lie in (0, 1)")
        if self.mode not in MODES:
            raise SelectionError(f"unknown mode '{self.mode}'; choose from {MODES}")
        if self.mode == "gfwer" and (self.k is None or self.k < 0):
            raise SelectionError("gfwer mode needs k >= 0")
        if self.mode == "pfp" and (self.q is None or not 0 < self.q < 1):
            raise SelectionError("pfp mode needs q in (0, 1)")
        if self.mode == "fdr" and (self.f is None or not self.alpha < self.f < 1):
            raise SelectionError("fdr mode needs f in (alpha, 1)")
        if self.K < 2:
            raise SelectionError("K must be at least 2")
        if self.M < 2:
            raise SelectionError("M must be at least 2")
        return self


@dataclass
class SelectionRun:
    """Everything :func:`select_detailed` produced along the way."""

    result: SelectionResult
    pooled: PooledEstimate
    estimates: list
    imputations: list


def _spvim_one(ds, cfg, seed):
    return estimate_spvim(ds, cfg.measure, cfg.learners, cfg.K, cfg.budget, seed, cfg.K_inner)


def select_detailed(dataset: Dataset, config: Optional[SelectionConfig] = None,
                    seed: int = 0) -> SelectionRun:
    """Run the full procedure and keep intermediate estimates."""
    cfg = (config or SelectionConfig()).validate()
    imp_seed, est_seed = (int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(2))
    if dataset.is_complete:
        imputations = [dataset]
        estimates = [_spvim_one(dataset, cfg, est_seed)]
        pooled = single_estimate(estimates[0])
    else:
        imputations = mice_impute(dataset, cfg.M, cfg.max_iter, cfg.donors, imp_seed, n_jobs=cfg.n_jobs)
        seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(est_seed).spawn(cfg.M)]
        if cfg.n_jobs == 1:
            estimates = [_spvim_one(d, cfg, s) for d, s in zip(imputations, seeds)]
        else:
            from joblib import Parallel, delayed

            estimates = Parallel(n_jobs=cfg.n_jobs)(
                delayed(_spvim_one)(d, cfg, s) for d, s in zip(imputations, seeds))
        pooled = pool_rubin(estimates)
    tests = test_statistics(pooled)
    init = initial_set(tests.p_adjusted, cfg.alpha)
    k = cfg.k
    if cfg.mode == "gfwer":
        k = min(cfg.k, dataset.p - len(init))
    res = augment(tests.p_adjusted, init, cfg.mode, cfg.alpha, k=k, q=cfg.q, f=cfg.f)
    extra = {
        "psi": pooled.psi_bar.tolist(),
        "variance": pooled.total_var.tolist(),
        "M": pooled.M,
        "feature_names": list(dataset.feature_names),
    }
    res = SelectionResult(res.initial_set, res.augmentation_set, res.final_set, res.alpha,
                          res.mode, res.k_used, res.q_used, res.f_used, tests, seed, extra)
    return SelectionRun(res, pooled, estimates, imputations)


def select(dataset: Dataset, config: Optional[SelectionConfig] = None, seed: int = 0) -> SelectionResult:
    """Select features with error-rate control.

    Incomplete data are multiply imputed and the per-imputation importance
    estimates pooled with Rubin's rules; complete data use a single estimate.
    The pooled estimates are tested, Holm-adjusted, thresholded at ``alpha``
    and augmented according to ``config.mode``.
    """
    return select_detailed(dataset, config, seed).result


class IntrinsicSelector(SelectorMixin, BaseEstimator):
    """Scikit-learn feature selector; ``X`` may contain NaN for missing cells.

    Parameters mirror :class:`SelectionConfig`; ``random_state`` seeds the run.

    Attributes
    ----------
    result_ : SelectionResult
    importances_ : ndarray of shape (p,)
    support_ : ndarray of bool
    """

    def __init__(self, alpha=0.05, mode="gfwer", k=0, q=None, f=None, measure="auto",
                 learners=None, n_folds=5, budget=None, n_imputations=10, inner_folds=3,
                 random_state=0):
        self.alpha = alpha
        self.mode = mode
        self.k = k
        self.q = q
        self.f = f
        self.measure = measure
        self.learners = learners
        self.n_folds = n_folds
        self.budget = budget
        self.n_imputations = n_imputations
        self.inner_folds = inner_folds
        self.random_state = random_state

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError("X must be 2-D with one row per outcome")
        ds = Dataset(X, y)
        cfg = SelectionConfig(
            measure=self.measure, learners=self.learners, K=self.n_folds, budget=self.budget,
            M=self.n_imputations, alpha=self.alpha, mode=self.mode, k=self.k, q=self.q,
            f=self.f, K_inner=self.inner_folds,
        )
        run = select_detailed(ds, cfg, int(self.random_state or 0))
        self.result_ = run.result
        self.importances_ = run.pooled.psi_bar
        self.support_ = np.zeros(X.shape[1], dtype=bool)
        self.support_[list(run.result.final_set)] = True
        self.n_features_in_ = X.shape[1]
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "support_")
        return self.support_
