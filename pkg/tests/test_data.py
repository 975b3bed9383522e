import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flevr.data import Dataset, DataError, load_csv, make_folds, write_csv


def test_masked_cells_become_nan_and_arrays_are_read_only():
    mask = np.ones((3, 3), dtype=int)
    mask[1, 2] = 0
    ds = Dataset(np.arange(6.0).reshape(3, 2), [0, 1, 0], mask)
    assert np.isnan(ds.features[1, 1])
    assert not ds.is_complete
    with pytest.raises(ValueError):
        ds.features[0, 0] = 5.0


def test_binary_detection():
    assert Dataset(np.zeros((4, 1)), [0, 1, 1, 0]).is_binary
    assert not Dataset(np.zeros((4, 1)), [0, 1, 2, 0]).is_binary
    assert not Dataset(np.zeros((4, 1)), [1, 1, 1, 1]).is_binary


def test_mask_shape_is_checked():
    with pytest.raises(DataError):
        Dataset(np.zeros((3, 2)), [0, 1, 0], np.ones((3, 2)))


def test_load_csv_marks_na(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("y,a,b\n1,0.5,NA\n0,1.5,2\n1,2.5,3\n")
    ds = load_csv(path, "y")
    assert (ds.n, ds.p) == (3, 2)
    assert int((ds.mask == 0).sum()) == 1
    assert ds.mask[0, 2] == 0
    assert ds.feature_names == ("a", "b")


def test_load_csv_complete(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,y\n1,0\n2,1\n")
    ds = load_csv(path, "y")
    assert ds.is_complete
    np.testing.assert_array_equal(ds.outcome, [0, 1])


def test_load_csv_errors(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(DataError, match="'y'"):
        load_csv(path, "y")
    path.write_text("y,a\n1,2\n0,oops\n")
    with pytest.raises(DataError, match="row 3.*'a'"):
        load_csv(path, "y")
    path.write_text("")
    with pytest.raises(DataError, match="empty"):
        load_csv(path, "y")


def test_custom_na_token(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("y,a\n1,?\n0,2\n")
    ds = load_csv(path, "y", na_token="?")
    assert ds.mask[0, 1] == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(1, 4), st.integers(0, 10_000))
def test_csv_round_trip(tmp_path_factory, n, p, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p)) * 10.0 ** rng.integers(-5, 5)
    y = rng.integers(0, 2, n).astype(float)
    mask = (rng.random((n, p + 1)) > 0.3).astype(int)
    ds = Dataset(X, y, mask)
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    write_csv(ds, path)
    back = load_csv(path, "y")
    np.testing.assert_array_equal(back.mask, ds.mask)
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.outcome, ds.outcome)


def test_folds_balanced_sizes():
    f = make_folds(np.linspace(0, 1, 10), 5, seed=1)
    assert np.bincount(f.folds)[1:].tolist() == [2] * 5


def test_folds_stratified():
    y = np.array([0, 1] * 5, dtype=float)
    f = make_folds(y, 5, seed=3)
    for v in range(1, 6):
        assert sorted(y[f.folds == v]) == [0, 1]


@settings(max_examples=40, deadline=None)
@given(st.integers(20, 200), st.integers(2, 8), st.floats(0.2, 0.8), st.integers(0, 1000))
def test_folds_binary_properties(n, K, share, seed):
    rng = np.random.default_rng(seed)
    y = (rng.random(n) < share).astype(float)
    if min(y.sum(), n - y.sum()) < K:
        with pytest.raises(DataError):
            make_folds(y, K, seed)
        return
    f = make_folds(y, K, seed)
    sizes = np.bincount(f.folds, minlength=K + 1)[1:]
    assert sizes.max() - sizes.min() <= 1
    for v in range(1, K + 1):
        assert set(y[f.folds == v]) == {0.0, 1.0}
    np.testing.assert_array_equal(f.folds, make_folds(y, K, seed).folds)


def test_folds_errors():
    with pytest.raises(DataError):
        make_folds(np.zeros(10), 1)
    with pytest.raises(DataError):
        make_folds(np.zeros(7), 4)
    with pytest.raises(DataError):
        make_folds(np.array([0, 0, 0, 0, 0, 0, 1, 1], dtype=float), 3)


def test_train_test_partition():
    f = make_folds(np.arange(20.0), 4, seed=0)
    train, test = f.train_test(2)
    assert sorted(np.concatenate([train, test]).tolist()) == list(range(20))
    assert (f.folds[test] == 2).all()
