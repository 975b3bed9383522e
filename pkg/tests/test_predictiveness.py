import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flevr.data import Dataset
from flevr.predictiveness import (
    MeasureError,
    auc,
    auc_eif,
    cv_predictiveness,
    measure_estimate,
    r_squared,
    r_squared_eif,
    resolve_measure,
)

from conftest import binary_dataset


def brute_auc(s, y):
    pos, neg = s[y == 1], s[y == 0]
    d = pos[:, None] - neg[None, :]
    return ((d > 0).sum() + 0.5 * (d == 0).sum()) / d.size


def test_auc_examples():
    assert auc([0.2, 0.8], [0, 1]) == 1.0
    assert auc([0.3] * 6, [0, 1, 0, 1, 1, 0]) == 0.5
    assert auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75


def test_auc_single_class_raises():
    with pytest.raises(MeasureError):
        auc([0.1, 0.2], [1, 1])
    with pytest.raises(MeasureError):
        auc_eif([0.1, 0.2], [0, 0])


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 60), st.integers(0, 10_000), st.integers(1, 6))
def test_auc_matches_pairwise_count(n, seed, levels):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    s = rng.integers(0, levels + 1, n) / levels
    assert auc(s, y) == brute_auc(s, y)


@settings(max_examples=50, deadline=None)
@given(st.integers(4, 80), st.integers(0, 10_000))
def test_auc_symmetry_and_monotone_invariance(n, seed):
    rng = np.random.default_rng(seed)
    y = np.r_[0, 1, rng.integers(0, 2, n - 2)]
    s = rng.standard_normal(n)
    assert auc(s, y) + auc(-s, y) == pytest.approx(1.0, abs=1e-15)
    assert auc(np.exp(3 * s) + 7, y) == auc(s, y)


def test_auc_eif_perfect_separation_is_zero():
    np.testing.assert_array_equal(auc_eif([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]), 0.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(4, 200), st.integers(0, 10_000))
def test_eif_means_are_zero(n, seed):
    rng = np.random.default_rng(seed)
    y = np.r_[0, 1, rng.integers(0, 2, n - 2)]
    s = np.round(rng.standard_normal(n), 1)
    assert abs(auc_eif(s, y).mean()) <= 1e-10
    yc = rng.standard_normal(n)
    assert abs(r_squared_eif(yc + rng.standard_normal(n), yc).mean()) <= 1e-8


def test_r_squared_examples():
    y = np.array([1.0, 2.0, 4.0, 7.0])
    assert r_squared(np.full(4, y.mean()), y) == 0.0
    assert r_squared(y, y) == 1.0
    with pytest.raises(MeasureError):
        r_squared([1, 2], [3, 3])


def _bootstrap_var(stat, a, b, reps, rng, need_both=False):
    n = a.size
    vals = []
    while len(vals) < reps:
        i = rng.integers(0, n, n)
        if need_both and b[i].min() == b[i].max():
            continue
        vals.append(stat(a[i], b[i]))
    return np.var(vals, ddof=1)


@pytest.mark.slow
def test_auc_eif_variance_matches_bootstrap():
    rng = np.random.default_rng(101)
    n = 200
    y = rng.integers(0, 2, n)
    s = y * 0.8 + rng.standard_normal(n)
    est = measure_estimate("auc", s, y)
    boot = _bootstrap_var(auc, s, y, 2000, rng, need_both=True)
    assert abs(est.variance - boot) / boot <= 0.15


@pytest.mark.slow
def test_r_squared_eif_variance_matches_bootstrap():
    rng = np.random.default_rng(102)
    n = 200
    x = rng.standard_normal(n)
    y = x + rng.standard_normal(n)
    f = 0.9 * x
    est = measure_estimate("r2", f, y)
    boot = _bootstrap_var(r_squared, f, y, 2000, rng)
    assert abs(est.variance - boot) / boot <= 0.15


def test_resolve_measure():
    ds = binary_dataset(20, 1, seed=0)
    assert resolve_measure("auto", ds) == "auc"
    cont = Dataset(np.zeros((5, 1)), np.arange(5.0))
    assert resolve_measure("auto", cont) == "r2"
    with pytest.raises(MeasureError):
        resolve_measure("auc", cont)
    with pytest.raises(MeasureError):
        resolve_measure("accuracy", ds)


def test_cv_empty_subset_exact_null():
    ds = binary_dataset(100, 2, [1.0], seed=1)
    assert cv_predictiveness(ds, ()).value == 0.5
    rng = np.random.default_rng(2)
    cont = Dataset(rng.standard_normal((60, 2)), rng.standard_normal(60))
    est = cv_predictiveness(cont, ())
    assert est.value == pytest.approx(0.0, abs=1e-12)


def test_cv_deterministic():
    ds = binary_dataset(200, 3, [1.0], seed=3)
    a = cv_predictiveness(ds, (0, 2), seed=4)
    b = cv_predictiveness(ds, (0, 2), seed=4)
    assert a.value == b.value
    np.testing.assert_array_equal(a.eif, b.eif)


@pytest.mark.slow
def test_cv_pure_noise_auc_near_half():
    inside = 0
    for seed in range(200):
        ds = binary_dataset(500, 1, None, seed=seed)
        v = cv_predictiveness(ds, (0,), seed=seed).value
        inside += 0.45 <= v <= 0.55
    assert inside / 200 >= 0.95


@pytest.mark.slow
def test_cv_duplicated_feature_adds_nothing():
    diffs = []
    for seed in range(200):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(300)
        y = (x + rng.standard_normal(300) > 0).astype(float)
        ds = Dataset(np.column_stack([x, x]), y)
        diffs.append(cv_predictiveness(ds, (0, 1), seed=seed).value - cv_predictiveness(ds, (0,), seed=seed).value)
    assert abs(np.mean(diffs)) <= 0.01


@pytest.mark.slow
def test_cv_monotone_in_subset():
    ok = 0
    for seed in range(100):
        ds = binary_dataset(300, 3, [0.8, 0.6, 0.0], seed=seed)
        a = cv_predictiveness(ds, (0,), seed=seed)
        ab = cv_predictiveness(ds, (0, 1, 2), seed=seed)
        ok += a.value <= ab.value + 2 * np.sqrt(a.variance + ab.variance)
    assert ok == 100
