"""Missing-at-random amputation, multiple imputation by chained equations with
predictive mean matching, and Rubin's-rules pooling."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .data import Dataset, DataError, write_csv
from .learners import RidgeLinear, RidgeLogistic


class AmputationError(RuntimeError):
    pass


@dataclass(frozen=True)
class AmputationSpec:
    """Which columns lose values and how.

    Feature indices are 0-based. The outcome is never amputated.

    Parameters
    ----------
    always_observed : tuple of int
        Features left untouched.
    monotone_chain : tuple of int
        Ordered features with nested missingness: a row missing chain
        element ``k`` also misses elements ``0..k-1``, so observing the first
        element implies the rest are observed.
    independent_missing : tuple of int
        Features amputated independently of each other.
    max_prop : float
        Target missing proportion for the most-missing column, in [0, 1).
    weight_features : tuple of int
        Always-observed features driving the missingness probabilities.
    """

    always_observed: tuple = ()
    monotone_chain: tuple = ()
    independent_missing: tuple = ()
    max_prop: float = 0.0
    weight_features: tuple = ()

    def __post_init__(self):
        if not 0 <= self.max_prop < 1:
            raise ValueError("max_prop must lie in [0, 1)")
        if set(self.monotone_chain) & set(self.always_observed):
            raise ValueError("monotone_chain overlaps always_observed")
        if set(self.independent_missing) & set(self.always_observed):
            raise ValueError("independent_missing overlaps always_observed")
        if not set(self.weight_features) <= set(self.always_observed):
            raise ValueError("weight_features must be always observed")


def _calibrate_intercept(score, target):
    """Intercept ``a`` with ``mean(expit(a + score)) == target``."""
    f = lambda a: expit(a + score).mean() - target
    lo, hi = -60.0, 60.0
    if f(lo) > 0 or f(hi) < 0:
        raise AmputationError(f"cannot calibrate missingness to proportion {target}")
    return brentq(f, lo, hi, xtol=1e-12)


def missingness_probabilities(dataset: Dataset, spec: AmputationSpec) -> np.ndarray:
    """Per-row probability that a row enters a missingness pattern."""
    n = dataset.n
    if spec.weight_features:
        W = dataset.features[:, list(spec.weight_features)]
        if np.isnan(W).any():
            raise AmputationError("weight features must be fully observed")
        sd = W.std(axis=0)
        sd[sd == 0] = 1.0
        score = ((W - W.mean(axis=0)) / sd).mean(axis=1)
        s = score.std()
        score = score / s if s > 0 else np.zeros(n)
    else:
        score = np.zeros(n)
    a = _calibrate_intercept(score, spec.max_prop)
    return expit(a + score)


def ampute(dataset: Dataset, spec: AmputationSpec, seed: int = 0) -> Dataset:
    """Introduce MAR missingness into a complete dataset.

    Each row's probability of entering a pattern is a logistic function of
    the standardized weight features, with the intercept calibrated so the
    expected missing proportion of the most-missing column equals
    ``max_prop``. For the monotone chain, a row that enters a pattern misses
    the first 1, 2, ... or all chain elements with equal probability.
    """
    dataset.require_complete()
    cols = set(spec.monotone_chain) | set(spec.independent_missing) | set(spec.always_observed)
    if cols and max(cols) >= dataset.p:
        raise DataError("amputation spec refers to a feature beyond the dataset width")
    if spec.max_prop == 0 or not (spec.monotone_chain or spec.independent_missing):
        return dataset
    rng = np.random.default_rng(seed)
    prob = missingness_probabilities(dataset, spec)
    mask = np.array(dataset.mask, copy=True)
    chain = list(spec.monotone_chain)
    if chain:
        hit = rng.random(dataset.n) < prob
        depth = rng.integers(1, len(chain) + 1, size=dataset.n)
        for k, j in enumerate(chain):
            mask[hit & (depth > k), j + 1] = 0
    for j in spec.independent_missing:
        mask[rng.random(dataset.n) < prob, j + 1] = 0
    return dataset.replace(mask=mask)


def chain_violations(dataset: Dataset, chain: Sequence[int]) -> int:
    """Rows where a chain element is observed while a later one is missing."""
    obs = dataset.mask[:, [j + 1 for j in chain]].astype(bool)
    bad = np.zeros(dataset.n, dtype=bool)
    for k in range(len(chain) - 1):
        bad |= obs[:, k] & ~obs[:, k + 1:].all(axis=1)
    return int(bad.sum())


def _is_binary_column(values):
    u = np.unique(values)
    return u.size == 2 and u[0] == 0.0 and u[1] == 1.0


def _pmm_draw(pred_obs, obs_values, pred_mis, donors, rng):
    order = np.argsort(pred_obs, kind="stable")
    sorted_pred = pred_obs[order]
    n_obs = sorted_pred.size
    d = min(donors, n_obs)
    pos = np.searchsorted(sorted_pred, pred_mis)
    offsets = np.arange(-d, d)
    cand = pos[:, None] + offsets[None, :]
    valid = (cand >= 0) & (cand < n_obs)
    cand_c = np.clip(cand, 0, n_obs - 1)
    dist = np.where(valid, np.abs(sorted_pred[cand_c] - pred_mis[:, None]), np.inf)
    nearest = np.argsort(dist, axis=1, kind="stable")[:, :d]
    choice = nearest[np.arange(pred_mis.size), rng.integers(0, d, size=pred_mis.size)]
    return obs_values[order[cand_c[np.arange(pred_mis.size), choice]]]


def _impute_chain(data, observed, targets, binary, max_iter, donors, penalty, rng):
    n, width = data.shape
    for c in targets:
        obs = observed[:, c]
        data[~obs, c] = rng.choice(data[obs, c], size=int((~obs).sum()), replace=True)
    for _ in range(max_iter):
        for c in targets:
            obs = observed[:, c]
            others = [k for k in range(width) if k != c]
            Xo, yo = data[np.ix_(obs, others)], data[obs, c]
            Xm = data[np.ix_(~obs, others)]
            # parameter uncertainty: the model for missing rows is fit on a bootstrap sample
            boot = rng.integers(0, yo.size, size=yo.size)
            if binary[c] and _is_binary_column(yo[boot]):
                fit_hat = RidgeLogistic(penalty=penalty).fit(Xo, yo)
                fit_dot = RidgeLogistic(penalty=penalty).fit(Xo[boot], yo[boot])
            else:
                fit_hat = RidgeLinear(penalty=penalty).fit(Xo, yo)
                fit_dot = RidgeLinear(penalty=penalty).fit(Xo[boot], yo[boot])
            data[~obs, c] = _pmm_draw(fit_hat.predict(Xo), yo, fit_dot.predict(Xm), donors, rng)
    return data


def mice_impute(dataset: Dataset, M: int = 10, max_iter: int = 20, donors: int = 5,
                seed: int = 0, penalty: float = 1e-3, n_jobs: int = 1) -> list[Dataset]:
    """Create ``M`` completed datasets by chained equations with predictive mean matching.

    Missing cells start as random draws from their column's observed values.
    Each sweep visits incompletely observed columns in index order (outcome
    first), regresses the column on all other current columns (ridge; logistic
    for 0/1 columns), and gives every missing cell the observed value of one
    of the ``donors`` observed rows with the nearest predicted mean, chosen
    uniformly. Every imputed value is therefore an observed value of its
    column.
    """
    if M < 2:
        raise ValueError("M must be at least 2")
    if dataset.is_complete:
        return [dataset for _ in range(M)]
    data = np.column_stack([dataset.outcome, dataset.features])
    observed = dataset.mask.astype(bool)
    targets = [c for c in range(data.shape[1]) if not observed[:, c].all()]
    for c in targets:
        n_obs = int(observed[:, c].sum())
        name = dataset.outcome_name if c == 0 else dataset.feature_names[c - 1]
        if n_obs == 0:
            raise DataError(f"column '{name}' has no observed values")
        if n_obs < donors:
            raise DataError(f"column '{name}' has {n_obs} observed values, fewer than {donors} donors")
    binary = [_is_binary_column(data[observed[:, c], c]) for c in range(data.shape[1])]
    seeds = np.random.SeedSequence(seed).spawn(M)

    def run(ss):
        rng = np.random.default_rng(ss)
        filled = _impute_chain(np.where(observed, data, 0.0), observed, targets, binary,
                               max_iter, donors, penalty, rng)
        return Dataset(filled[:, 1:], filled[:, 0], None, dataset.feature_names, dataset.outcome_name)

    if n_jobs == 1:
        return [run(ss) for ss in seeds]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=n_jobs)(delayed(run)(ss) for ss in seeds)


def write_imputations(datasets: Sequence[Dataset], outdir, manifest: dict) -> list[Path]:
    """Write ``imputed_<m>.csv`` files and a ``manifest.json`` sidecar."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    for m, ds in enumerate(datasets, start=1):
        path = outdir / f"imputed_{m}.csv"
        write_csv(ds, path)
        paths.append(path)
    info = dict(manifest)
    info["files"] = [p.name for p in paths]
    (outdir / "manifest.json").write_text(json.dumps(info, indent=2) + "\n", encoding="utf-8")
    return paths


@dataclass(frozen=True)
class PooledEstimate:
    """Importance pooled across imputations with Rubin's rules."""

    psi_bar: np.ndarray
    within_var: np.ndarray
    between_var: np.ndarray
    total_var: np.ndarray
    M: int

    @property
    def p(self):
        return self.psi_bar.shape[0]


def pool_rubin(estimates) -> PooledEstimate:
    """Combine per-imputation estimates (objects with ``psi`` and ``variances``).

    Components are sorted across imputations before summing, which makes the
    result independent of the order of ``estimates``.
    """
    M = len(estimates)
    if M < 2:
        raise ValueError("pooling needs at least two imputations")
    psi = np.array([np.asarray(e.psi, dtype=float) for e in estimates])
    var = np.array([np.asarray(e.variances, dtype=float) for e in estimates])
    if psi.ndim != 2 or var.shape != psi.shape:
        raise ValueError("estimates must share the same number of features")
    psi = np.sort(psi, axis=0)
    var = np.sort(var, axis=0)
    # deviations from the smallest value keep identical imputations exactly at zero spread
    dev = psi - psi[0]
    mean_dev = dev.mean(axis=0)
    psi_bar = psi[0] + mean_dev
    between = ((dev - mean_dev) ** 2).sum(axis=0) / (M - 1)
    within = var.mean(axis=0)
    total = within + (M + 1) / M * between
    return PooledEstimate(psi_bar, within, between, total, M)


def single_estimate(estimate) -> PooledEstimate:
    """Complete-data case: no imputation component in the variance."""
    psi = np.asarray(estimate.psi, dtype=float)
    var = np.asarray(estimate.variances, dtype=float)
    return PooledEstimate(psi, var, np.zeros_like(var), var.copy(), 1)
