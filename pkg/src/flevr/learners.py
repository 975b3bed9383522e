"""Candidate prediction algorithms, a simplex-weighted stacking ensemble and
rank-correlation screening.

Every learner estimates the conditional mean of the outcome: for a binary
outcome ``predict`` returns probabilities in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import cKDTree
from scipy.special import expit
from scipy.stats import rankdata
from sklearn.base import BaseEstimator

from ._boost import boost_cells, ridge_logistic_newton
from .data import Dataset, make_folds

KINDS = ("ridge-logistic", "ridge-linear", "knn", "boosted-stumps")

_DEFAULTS = {
    "ridge-logistic": {"penalty": 0.1},
    "ridge-linear": {"penalty": 0.1},
    "knn": {"n_neighbors": 20},
    "boosted-stumps": {"n_rounds": 100, "shrinkage": 0.1},
}


class LearnerError(RuntimeError):
    pass


def _standardize(X):
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale < 1e-12] = 1.0
    return center, scale


class ConstantModel(BaseEstimator):
    """Predicts the training outcome mean everywhere."""

    def fit(self, X, y):
        self.value_ = float(np.mean(y))
        return self

    def predict(self, X):
        return np.full(np.shape(X)[0], self.value_)


class RidgeLogistic(BaseEstimator):
    """L2-penalized logistic regression fit by damped Newton iterations.

    Features are standardized internally and the intercept is not penalized,
    so a constant column receives a zero coefficient.
    """

    def __init__(self, penalty=0.1, max_iter=50, tol=1e-10):
        self.penalty = penalty
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n, d = X.shape
        self.center_, self.scale_ = _standardize(X)
        Z = np.empty((n, d + 1))
        Z[:, 0] = 1.0
        Z[:, 1:] = (X - self.center_) / self.scale_
        pen = np.full(d + 1, float(self.penalty))
        pen[0] = 0.0
        ybar = np.clip(y.mean(), 1e-6, 1 - 1e-6)
        beta = np.zeros(d + 1)
        beta[0] = np.log(ybar / (1 - ybar))
        beta = ridge_logistic_newton(Z, y, beta, pen, int(self.max_iter), float(self.tol))
        self.intercept_ = beta[0]
        self.coef_ = beta[1:]
        return self

    def decision_function(self, X):
        X = np.asarray(X, dtype=float)
        return self.intercept_ + ((X - self.center_) / self.scale_) @ self.coef_

    def predict(self, X):
        return expit(self.decision_function(X))


class RidgeLinear(BaseEstimator):
    """Ridge regression on standardized features with a free intercept.

    With ``clip=True`` predictions are clipped to [0, 1]; this is set
    automatically when the model is used for a binary outcome.
    """

    def __init__(self, penalty=0.1, clip=False):
        self.penalty = penalty
        self.clip = clip

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        self.center_, self.scale_ = _standardize(X)
        Xs = (X - self.center_) / self.scale_
        ybar = y.mean()
        A = Xs.T @ Xs
        A[np.diag_indices_from(A)] += self.penalty
        self.coef_ = np.linalg.lstsq(A, Xs.T @ (y - ybar), rcond=None)[0]
        self.intercept_ = ybar
        return self

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        out = self.intercept_ + ((X - self.center_) / self.scale_) @ self.coef_
        return np.clip(out, 0.0, 1.0) if self.clip else out


class KNNRegressor(BaseEstimator):
    """Mean outcome among the ``n_neighbors`` nearest standardized points."""

    def __init__(self, n_neighbors=20):
        self.n_neighbors = n_neighbors

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        self.y_ = np.asarray(y, dtype=float).copy()
        self.k_ = int(min(self.n_neighbors, self.y_.shape[0]))
        self.center_, self.scale_ = _standardize(X)
        if self.k_ < self.y_.shape[0]:
            self.tree_ = cKDTree((X - self.center_) / self.scale_)
        self.mean_ = float(self.y_.mean())
        return self

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if self.k_ >= self.y_.shape[0]:
            return np.full(X.shape[0], self.mean_)
        _, idx = self.tree_.query((X - self.center_) / self.scale_, k=self.k_)
        if self.k_ == 1:
            return self.y_[idx]
        return self.y_[idx].mean(axis=1)


class BoostedStumps(BaseEstimator):
    """Gradient boosting of depth-one trees.

    Uses logistic loss for a binary outcome and squared error otherwise.
    Continuous features are bucketed at up to ``max_bins`` empirical
    quantiles. Each round takes a regularized Newton step on the best split,
    halved until the training loss does not increase. With
    ``record_loss=True`` the per-round training loss is kept in
    ``train_loss_``.
    """

    def __init__(self, n_rounds=100, shrinkage=0.1, reg_lambda=1.0, max_bins=32, loss="auto",
                 record_loss=False):
        self.n_rounds = n_rounds
        self.shrinkage = shrinkage
        self.reg_lambda = reg_lambda
        self.max_bins = max_bins
        self.loss = loss
        self.record_loss = record_loss

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n, d = X.shape
        if self.loss == "auto":
            logistic = bool(np.isin(y, (0.0, 1.0)).all())
        else:
            logistic = self.loss == "logistic"
        self.logistic_ = logistic
        cuts = []
        bins = np.empty((n, d), dtype=np.int64)
        for j in range(d):
            vals = np.unique(X[:, j])
            if vals.size > self.max_bins:
                qs = np.quantile(X[:, j], np.arange(1, self.max_bins) / self.max_bins)
                cut = np.unique(qs)
            else:
                cut = (vals[:-1] + vals[1:]) / 2.0
            cuts.append(cut)
            bins[:, j] = np.searchsorted(cut, X[:, j], side="left")
        nbins = np.array([c.size + 1 for c in cuts], dtype=np.int64)
        # rows sharing every bin always share a score: collapse them
        code = np.zeros(n, dtype=np.int64)
        for j in range(d):
            code = code * nbins[j] + bins[:, j]
        _, first, inverse = np.unique(code, return_index=True, return_inverse=True)
        cnt = np.bincount(inverse).astype(float)
        sy = np.bincount(inverse, weights=y)
        cell_bins = np.ascontiguousarray(bins[first])
        if logistic:
            ybar = np.clip(y.mean(), 1e-6, 1 - 1e-6)
            F0 = float(np.log(ybar / (1 - ybar)))
        else:
            F0 = float(y.mean())
        feat, split, left, right, losses = boost_cells(
            cell_bins, nbins, cnt, sy, F0, int(self.n_rounds), float(self.shrinkage),
            float(self.reg_lambda), logistic, bool(self.record_loss),
        )
        if not logistic:
            losses = losses + 0.5 * float(y @ y)
        self.train_loss_ = losses / n
        self._compile(F0, cuts, feat, split, left, right)
        return self

    def _compile(self, F0, cuts, feat, split, left, right):
        # collapse the additive stumps into one step function per feature
        const = F0 + left[feat < 0].sum()
        steps = []
        for j, cut in enumerate(cuts):
            sel = feat == j
            if not sel.any():
                continue
            thr = cut[split[sel]]
            uniq = np.unique(thr)
            pos = np.searchsorted(uniq, thr)
            # value on interval i is sum over rounds of (left if i <= pos else right)
            intervals = np.arange(uniq.size + 1)[:, None]
            table = np.where(intervals <= pos[None, :], left[sel][None, :], right[sel][None, :]).sum(axis=1)
            steps.append((j, uniq, table))
        self.constant_ = const
        self.steps_ = steps

    def decision_function(self, X):
        X = np.asarray(X, dtype=float)
        out = np.full(X.shape[0], self.constant_)
        for j, uniq, table in self.steps_:
            out += table[np.searchsorted(uniq, X[:, j], side="left")]
        return out

    def predict(self, X):
        F = self.decision_function(X)
        return expit(F) if self.logistic_ else F


@dataclass(frozen=True)
class LearnerSpec:
    """A candidate algorithm and its hyperparameters."""

    kind: str
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown learner kind '{self.kind}'; choose from {KINDS}")
        merged = {**_DEFAULTS[self.kind], **dict(self.params)}
        if self.kind in ("ridge-logistic", "ridge-linear") and not merged["penalty"] >= 0:
            raise ValueError("ridge penalty must be >= 0")
        if self.kind == "knn" and not (int(merged["n_neighbors"]) >= 1):
            raise ValueError("n_neighbors must be >= 1")
        if self.kind == "boosted-stumps":
            if int(merged["n_rounds"]) < 1:
                raise ValueError("n_rounds must be >= 1")
            if not 0 < merged["shrinkage"] <= 1:
                raise ValueError("shrinkage must lie in (0, 1]")
        object.__setattr__(self, "params", merged)

    def make(self, binary: bool) -> BaseEstimator:
        p = self.params
        if self.kind == "ridge-logistic":
            if not binary:
                raise LearnerError("ridge-logistic requires a binary outcome")
            return RidgeLogistic(penalty=p["penalty"])
        if self.kind == "ridge-linear":
            return RidgeLinear(penalty=p["penalty"], clip=binary)
        if self.kind == "knn":
            return KNNRegressor(n_neighbors=int(p["n_neighbors"]))
        return BoostedStumps(
            n_rounds=int(p["n_rounds"]), shrinkage=float(p["shrinkage"]),
            loss="logistic" if binary else "squared",
        )

    def to_dict(self):
        return {"kind": self.kind, "params": dict(self.params)}


def default_library(binary: bool) -> list[LearnerSpec]:
    """Library used for importance estimation: a GLM and boosted stumps."""
    glm = LearnerSpec("ridge-logistic") if binary else LearnerSpec("ridge-linear")
    return [glm, LearnerSpec("boosted-stumps")]


def evaluation_library(binary: bool) -> list[LearnerSpec]:
    """Wider library used when refitting on a selected feature set."""
    return default_library(binary) + [LearnerSpec("knn", {"n_neighbors": 50})]


@dataclass(frozen=True)
class FittedModel:
    spec: Optional[LearnerSpec]
    estimator: BaseEstimator
    feature_subset: tuple

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if not self.feature_subset:
            return self.estimator.predict(np.empty((X.shape[0], 0)))
        return self.estimator.predict(X[:, list(self.feature_subset)])


@dataclass(frozen=True)
class EnsembleModel:
    members: tuple
    weights: np.ndarray
    feature_subset: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(self.members),) or (w < 0).any() or abs(w.sum() - 1) > 1e-10:
            raise ValueError("ensemble weights must be nonnegative and sum to one")
        object.__setattr__(self, "weights", w)

    def predict(self, X):
        preds = np.column_stack([m.predict(X) for m in self.members])
        return preds @ self.weights


def _as_subset(subset) -> tuple:
    return tuple(sorted(int(j) for j in subset))


def _check_columns(X, subset):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("features must be a 2-d array")
    if subset and max(subset) >= X.shape[1]:
        raise ValueError(f"feature matrix has {X.shape[1]} columns; model needs column {max(subset)}")
    return X


def fit_arrays(spec: Optional[LearnerSpec], X, y, binary: bool) -> BaseEstimator:
    """Fit one learner on a dense matrix; no columns means a constant model."""
    if X.shape[1] == 0 or spec is None:
        return ConstantModel().fit(X, y)
    return spec.make(binary).fit(X, y)


def fit(spec: LearnerSpec, dataset: Dataset, subset=(), rows=None) -> FittedModel:
    """Fit ``spec`` on the columns ``subset`` (0-based) and the given rows."""
    subset = _as_subset(subset)
    rows = np.arange(dataset.n) if rows is None else np.asarray(rows)
    X = dataset.features[np.ix_(rows, list(subset))]
    y = dataset.outcome[rows]
    if np.isnan(X).any() or np.isnan(y).any():
        raise ValueError("fit requires observed values on the selected rows and columns")
    est = fit_arrays(spec if subset else None, X, y, dataset.is_binary)
    return FittedModel(spec if subset else None, est, subset)


def predict(model, features) -> np.ndarray:
    """Scores of a fitted model or ensemble on a full-width feature matrix."""
    X = _check_columns(features, model.feature_subset)
    return model.predict(X)


def _project_simplex(v):
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


_EPS = 1e-6


def _meta_loss(P, y, w, binary):
    f = P @ w
    if binary:
        f = np.clip(f, _EPS, 1 - _EPS)
        return -np.mean(y * np.log(f) + (1 - y) * np.log1p(-f))
    return np.mean((y - f) ** 2)


def _meta_grad(P, y, w, binary):
    f = P @ w
    if binary:
        f = np.clip(f, _EPS, 1 - _EPS)
        r = -(y / f - (1 - y) / (1 - f))
    else:
        r = 2 * (f - y)
    return P.T @ r / y.shape[0]


def simplex_weights(P, y, binary: bool, max_iter: int = 1000, tol: float = 1e-9) -> np.ndarray:
    """Convex combination weights minimizing log loss (binary) or squared error.

    Two members reduce to a bounded scalar problem solved by Brent's method;
    otherwise projected gradient descent with backtracking from uniform
    weights, stopped when the gradient mapping falls below ``tol``.
    """
    P = np.asarray(P, dtype=float)
    y = np.asarray(y, dtype=float)
    m = P.shape[1]
    if m == 1:
        return np.ones(1)
    if m == 2:
        d = P[:, 0] - P[:, 1]
        res = minimize_scalar(
            lambda a: _meta_loss(P, y, np.array([a, 1 - a]), binary),
            bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-10},
        )
        a = float(res.x)
        # the bounded search never lands exactly on an endpoint
        for edge in (0.0, 1.0):
            if _meta_loss(P, y, np.array([edge, 1 - edge]), binary) <= res.fun:
                a = edge
        if not np.any(d):
            a = 0.5
        return np.array([a, 1 - a])
    w = np.full(m, 1.0 / m)
    loss = _meta_loss(P, y, w, binary)
    step = 1.0
    for _ in range(max_iter):
        g = _meta_grad(P, y, w, binary)
        while True:
            cand = _project_simplex(w - step * g)
            diff = cand - w
            cand_loss = _meta_loss(P, y, cand, binary)
            if cand_loss <= loss + g @ diff + (diff @ diff) / (2 * step) or step < 1e-12:
                break
            step *= 0.5
        converged = np.max(np.abs(diff)) / step < tol
        w, loss = cand, cand_loss
        step *= 2.0
        if converged:
            break
    w = np.maximum(w, 0.0)
    return w / w.sum()


def stack_arrays(specs: Sequence[LearnerSpec], X, y, binary: bool, inner_folds: np.ndarray):
    """Fit the stack on dense arrays; returns ([(spec, estimator), ...], weights).

    ``inner_folds`` holds 1-based fold labels for the rows of ``X``.
    """
    if X.shape[1] == 0:
        return [(None, ConstantModel().fit(X, y))], np.ones(1)
    K = int(inner_folds.max())
    n = y.shape[0]
    cv = []
    kept = []
    for spec in specs:
        try:
            col = np.empty(n)
            for v in range(1, K + 1):
                held = inner_folds == v
                col[held] = spec.make(binary).fit(X[~held], y[~held]).predict(X[held])
            est = spec.make(binary).fit(X, y)
        except (LearnerError, np.linalg.LinAlgError, ValueError):
            continue
        cv.append(col)
        kept.append((spec, est))
    if not kept:
        raise LearnerError("all candidate learners failed to fit")
    w = simplex_weights(np.column_stack(cv), y, binary)
    return kept, w


def fit_stack(specs: Sequence[LearnerSpec], dataset: Dataset, subset=(), K_inner: int = 3,
              seed: int = 0, rows=None) -> EnsembleModel:
    """Stack ``specs`` with weights chosen by ``K_inner``-fold cross-validation."""
    if K_inner < 2:
        raise ValueError("K_inner must be at least 2")
    if not specs:
        raise ValueError("need at least one candidate learner")
    subset = _as_subset(subset)
    rows = np.arange(dataset.n) if rows is None else np.asarray(rows)
    X = dataset.features[np.ix_(rows, list(subset))]
    y = dataset.outcome[rows]
    inner = make_folds(y, K_inner, seed).folds
    kept, w = stack_arrays(specs, X, y, dataset.is_binary, inner)
    members = tuple(FittedModel(spec, est, subset) for spec, est in kept)
    return EnsembleModel(members, w, subset)


def rank_correlations(X, y) -> np.ndarray:
    """Spearman correlation (average ranks for ties) of each column with ``y``."""
    X = np.asarray(X, dtype=float)
    if X.shape[1] == 0:
        return np.zeros(0)
    rx = rankdata(X, axis=0)
    ry = rankdata(y)
    rx = rx - rx.mean(axis=0)
    ry = ry - ry.mean()
    num = rx.T @ ry
    den = np.sqrt((rx ** 2).sum(axis=0) * (ry ** 2).sum())
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return r


def screen_subset(subset, abs_corr) -> tuple:
    """Apply the screening rule to ``subset`` given precomputed ``|corr|`` for all features."""
    subset = _as_subset(subset)
    size = len(subset)
    if size <= 2:
        return subset
    keep = 2 if size < 100 else 10
    idx = np.asarray(subset)
    order = np.lexsort((idx, -abs_corr[idx]))
    return tuple(sorted(int(j) for j in idx[order[:keep]]))


def screen_by_rank_correlation(dataset: Dataset, subset, rows=None) -> tuple:
    """Reduce ``subset`` to its most outcome-correlated members.

    Subsets of size at most 2 are returned unchanged; sizes 3 to 99 keep the
    top 2 by absolute Spearman correlation with the outcome, larger subsets
    keep the top 10. Ties go to the lower index.
    """
    subset = _as_subset(subset)
    if len(subset) <= 2:
        return subset
    rows = np.arange(dataset.n) if rows is None else np.asarray(rows)
    abs_corr = np.zeros(dataset.p)
    cols = list(subset)
    abs_corr[cols] = np.abs(rank_correlations(dataset.features[np.ix_(rows, cols)], dataset.outcome[rows]))
    return screen_subset(subset, abs_corr)


__all__ = [
    "BoostedStumps", "ConstantModel", "EnsembleModel", "FittedModel", "KNNRegressor",
    "LearnerError", "LearnerSpec", "RidgeLinear", "RidgeLogistic", "default_library",
    "evaluation_library", "fit", "fit_stack", "predict", "rank_correlations",
    "screen_by_rank_correlation", "screen_subset", "simplex_weights", "stack_arrays",
]
