"""Shapley population variable importance from one complete dataset."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb
from typing import Mapping, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted, check_X_y

from .data import Dataset, make_folds
from .learners import LearnerSpec
from .predictiveness import CrossFitter, resolve_measure


class ShapleyError(ValueError):
    pass


def shapley_kernel(p: int, m: int) -> float:
    """Kernel weight of a single subset of size ``m`` out of ``p`` (0 < m < p)."""
    return (p - 1) / (comb(p, m) * m * (p - m))


@dataclass(frozen=True)
class SubsetSample:
    """Subsets entering the Shapley regression.

    ``subsets[0]`` is the empty set and ``subsets[1]`` the full set. In
    sampled mode ``multiplicities`` count how often each subset was drawn and
    ``draws`` keeps the raw draw sequence (indices into ``subsets``).
    """

    p: int
    subsets: tuple
    multiplicities: np.ndarray
    kernel_weights: np.ndarray
    exhaustive: bool
    draws: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self):
        return len(self.subsets)


def _size_distribution(p):
    m = np.arange(1, p)
    w = (p - 1) / (m * (p - m))
    return m, w / w.sum()


def default_budget(p: int) -> int:
    """All subsets when ``p <= 12``; otherwise ``min(2**p, 48 p)`` draws."""
    if p <= 12:
        return 2 ** p
    return min(2 ** p, 48 * p)


def _kernel_weights(p, subsets):
    out = np.empty(len(subsets))
    for i, s in enumerate(subsets):
        m = len(s)
        out[i] = np.inf if m in (0, p) else shapley_kernel(p, m)
    return out


def sample_subsets(p: int, budget: Optional[int] = None, seed: int = 0) -> SubsetSample:
    """Draw the subsets for the Shapley regression.

    With ``budget >= 2**p`` every subset is used once. Otherwise the empty
    and full sets are included and ``budget - 2`` subsets are drawn i.i.d.:
    a size ``m`` with probability proportional to ``1 / (m (p - m))``, then a
    uniformly random subset of that size. This makes each individual subset's
    draw probability proportional to its kernel weight.
    """
    if p < 1:
        raise ShapleyError("p must be at least 1")
    budget = default_budget(p) if budget is None else int(budget)
    if budget < 2:
        raise ShapleyError("budget must be at least 2")
    full = tuple(range(p))
    if budget >= 2 ** p:
        subsets = [(), full] + [
            s for m in range(1, p) for s in itertools.combinations(range(p), m)
        ]
        return SubsetSample(
            p, tuple(subsets), np.ones(len(subsets), dtype=np.int64),
            _kernel_weights(p, subsets), True,
        )
    rng = np.random.default_rng(seed)
    sizes, probs = _size_distribution(p)
    drawn = rng.choice(sizes, size=budget - 2, p=probs)
    index = {(): 0, full: 1}
    subsets = [(), full]
    draws = np.empty(budget - 2, dtype=np.int64)
    for t, m in enumerate(drawn):
        s = tuple(sorted(int(j) for j in rng.choice(p, size=int(m), replace=False)))
        if s not in index:
            index[s] = len(subsets)
            subsets.append(s)
        draws[t] = index[s]
    mult = np.bincount(draws, minlength=len(subsets)).astype(np.int64)
    mult[0] = mult[1] = 1
    return SubsetSample(p, tuple(subsets), mult, _kernel_weights(p, subsets), False, draws)


def _regression_weights(sample: SubsetSample, multiplicities=None):
    mult = sample.multiplicities if multiplicities is None else multiplicities
    if sample.exhaustive:
        return sample.kernel_weights[2:] * mult[2:]
    # draws already follow the kernel, so each draw counts once
    return mult[2:].astype(float)


def shapley_operator(sample: SubsetSample, multiplicities=None) -> np.ndarray:
    """Matrix ``L`` (p x len(sample)) with ``psi = L @ values``.

    Solves the kernel-weighted least squares fit of ``v(s) - v(empty)`` on
    subset indicators subject to the efficiency constraint
    ``sum(psi) = v(full) - v(empty)``.
    """
    p, S = sample.p, len(sample)
    L = np.zeros((p, S))
    if p == 1:
        L[0, 0], L[0, 1] = -1.0, 1.0
        return L
    w = _regression_weights(sample, multiplicities)
    A = np.zeros((S - 2, p))
    for i, s in enumerate(sample.subsets[2:]):
        A[i, list(s)] = 1.0
    keep = w > 0
    A, w_k = A[keep], w[keep]
    kkt = np.zeros((p + 1, p + 1))
    kkt[:p, :p] = A.T @ (A * w_k[:, None])
    kkt[:p, p] = 1.0
    kkt[p, :p] = 1.0
    if np.linalg.matrix_rank(kkt) < p + 1:
        raise ShapleyError(
            "sampled subsets do not identify the importance vector; increase the budget"
        )
    inv = np.linalg.inv(kkt)
    B = inv[:p, :p] @ (A.T * w_k)
    mid = np.zeros((p, S - 2))
    mid[:, keep] = B
    L[:, 2:] = mid
    L[:, 1] = inv[:p, p]
    L[:, 0] = -mid.sum(axis=1) - inv[:p, p]
    return L


def _values_vector(sample, values):
    if isinstance(values, Mapping):
        try:
            return np.array([values[s] for s in sample.subsets], dtype=float)
        except KeyError as exc:
            raise ShapleyError(f"no value for subset {exc.args[0]}") from None
    v = np.asarray(values, dtype=float)
    if v.shape != (len(sample),):
        raise ShapleyError("values must have one entry per sampled subset")
    return v


def shapley_solve(sample: SubsetSample, values) -> np.ndarray:
    """Importance vector from subset values (mapping keyed by sorted tuples, or array)."""
    return shapley_operator(sample) @ _values_vector(sample, values)


def shapley_exact(values: Mapping, p: Optional[int] = None) -> np.ndarray:
    """Shapley values by direct enumeration of every subset not containing j."""
    if p is None:
        p = max((max(s) + 1 for s in values if s), default=0)
    if p > 20:
        raise ShapleyError("exact enumeration is limited to p <= 20")
    lookup = {tuple(sorted(s)): float(v) for s, v in values.items()}
    if len(lookup) < 2 ** p:
        raise ShapleyError(f"need values for all {2 ** p} subsets, got {len(lookup)}")
    psi = np.zeros(p)
    for j in range(p):
        others = [k for k in range(p) if k != j]
        for m in range(p):
            coef = 1.0 / (comb(p - 1, m) * p)
            for s in itertools.combinations(others, m):
                psi[j] += coef * (lookup[tuple(sorted(s + (j,)))] - lookup[s])
    return psi


@dataclass
class SpvimEstimate:
    psi: np.ndarray
    v_null: float
    v_full: float
    variances: np.ndarray
    subset_values: dict
    sample: SubsetSample
    eif: np.ndarray
    eif_variance: np.ndarray
    sampling_variance: np.ndarray
    measure: str

    @property
    def p(self):
        return self.psi.shape[0]

    @property
    def se(self):
        return np.sqrt(self.variances)

    def to_dict(self):
        return {
            "measure": self.measure,
            "psi": self.psi.tolist(),
            "se": self.se.tolist(),
            "variance": self.variances.tolist(),
            "eif_variance": self.eif_variance.tolist(),
            "sampling_variance": self.sampling_variance.tolist(),
            "v_null": self.v_null,
            "v_full": self.v_full,
            "n_subsets": len(self.sample),
            "exhaustive": self.sample.exhaustive,
        }


def sampling_variance(sample: SubsetSample, values, n_boot: int = 200, seed: int = 0) -> np.ndarray:
    """Monte Carlo variance of ``psi`` from re-drawing the sampled subsets.

    The draws are resampled with replacement and the regression is re-solved
    with the subset values held fixed. Zero in exhaustive mode.
    """
    v = _values_vector(sample, values)
    if sample.exhaustive or sample.draws.size == 0:
        return np.zeros(sample.p)
    rng = np.random.default_rng(seed)
    reps = []
    S = len(sample)
    for _ in range(n_boot):
        pick = rng.choice(sample.draws, size=sample.draws.size, replace=True)
        mult = np.bincount(pick, minlength=S)
        mult[0] = mult[1] = 1
        try:
            reps.append(shapley_operator(sample, mult) @ v)
        except ShapleyError:
            continue
    if len(reps) < 2:
        return np.zeros(sample.p)
    return np.var(np.array(reps), axis=0, ddof=1)


def estimate_spvim(dataset: Dataset, measure: str = "auto",
                   learners: Optional[Sequence[LearnerSpec]] = None, K: int = 5,
                   budget: Optional[int] = None, seed: int = 0, K_inner: int = 3,
                   folds=None, n_boot: int = 200) -> SpvimEstimate:
    """Cross-fitted Shapley importance for every feature of a complete dataset.

    Predictiveness is estimated for each sampled subset, the Shapley
    regression maps those values to ``psi``, and the influence vectors of the
    subset estimates are pushed through the same linear map to give each
    feature's influence-function variance. In sampled mode a Monte Carlo
    term for subset-sampling variability is added.
    """
    dataset.require_complete()
    measure = resolve_measure(measure, dataset)
    ss = np.random.SeedSequence(seed)
    fold_seed, subset_seed, fit_seed, boot_seed = (int(c.generate_state(1)[0]) for c in ss.spawn(4))
    if folds is None:
        folds = make_folds(dataset, K, fold_seed)
    sample = sample_subsets(dataset.p, budget, subset_seed)
    L = shapley_operator(sample)
    fitter = CrossFitter(dataset, folds, learners, K_inner=K_inner, seed=fit_seed)
    estimates = [fitter.estimate(s, measure) for s in sample.subsets]
    values = np.array([e.value for e in estimates])
    psi = L @ values
    phi = L @ np.vstack([e.eif for e in estimates])
    n = dataset.n
    eif_var = np.mean(phi ** 2, axis=1) / n
    samp_var = sampling_variance(sample, values, n_boot=n_boot, seed=boot_seed)
    return SpvimEstimate(
        psi=psi, v_null=float(values[0]), v_full=float(values[1]),
        variances=eif_var + samp_var, subset_values=dict(zip(sample.subsets, estimates)),
        sample=sample, eif=phi, eif_variance=eif_var, sampling_variance=samp_var,
        measure=measure,
    )


class SPVIM(BaseEstimator):
    """Shapley population variable importance as a scikit-learn estimator.

    Parameters
    ----------
    measure : {"auto", "auc", "r2"}
        Predictiveness measure; "auto" picks AUC for a 0/1 outcome.
    learners : list of LearnerSpec, optional
        Candidate library for the stack; defaults to a GLM plus boosted stumps.
    n_folds : int
        Cross-fitting folds.
    budget : int, optional
        Number of subsets; defaults to all subsets for ``p <= 12``.
    inner_folds : int
        Folds used to choose the stack weights.
    random_state : int

    Attributes
    ----------
    importances_ : ndarray of shape (p,)
    variances_ : ndarray of shape (p,)
    estimate_ : SpvimEstimate
    """

    def __init__(self, measure="auto", learners=None, n_folds=5, budget=None, inner_folds=3,
                 random_state=0):
        self.measure = measure
        self.learners = learners
        self.n_folds = n_folds
        self.budget = budget
        self.inner_folds = inner_folds
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        ds = Dataset(X, y)
        self.estimate_ = estimate_spvim(
            ds, self.measure, self.learners, self.n_folds, self.budget,
            int(self.random_state or 0), self.inner_folds,
        )
        self.importances_ = self.estimate_.psi
        self.variances_ = self.estimate_.variances
        self.n_features_in_ = X.shape[1]
        return self

    def confidence_intervals(self, level=0.95):
        from scipy.stats import norm

        check_is_fitted(self, "estimate_")
        z = norm.ppf(0.5 + level / 2)
        se = np.sqrt(self.variances_)
        return np.column_stack([self.importances_ - z * se, self.importances_ + z * se])

