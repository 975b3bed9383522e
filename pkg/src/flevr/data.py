"""Dataset container with an explicit missingness mask, fold assignment and CSV I/O."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed input data."""


def _is_binary(values: np.ndarray) -> bool:
    if values.size == 0:
        return False
    uniq = np.unique(values)
    return uniq.size == 2 and uniq[0] == 0.0 and uniq[1] == 1.0


@dataclass(frozen=True)
class Dataset:
    """Rectangular numeric data with a per-cell observation mask.

    Parameters
    ----------
    features : ndarray of shape (n, p)
        Feature values. Cells whose mask entry is 0 are replaced by NaN on
        construction so that any accidental read poisons downstream results.
    outcome : ndarray of shape (n,)
        Outcome values, binary {0, 1} or real.
    mask : ndarray of shape (n, p + 1), optional
        1 where observed. Column 0 refers to the outcome. Defaults to all ones
        where the inputs are finite.
    feature_names : sequence of str, optional
    outcome_name : str
    """

    features: np.ndarray
    outcome: np.ndarray
    mask: Optional[np.ndarray] = None
    feature_names: Optional[Sequence[str]] = None
    outcome_name: str = "y"
    _binary: bool = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        X = np.array(self.features, dtype=float, copy=True)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        y = np.array(self.outcome, dtype=float, copy=True).ravel()
        if X.ndim != 2:
            raise DataError("features must be a 2-d array")
        n, p = X.shape
        if y.shape[0] != n:
            raise DataError(f"outcome has {y.shape[0]} rows, features have {n}")
        if self.mask is None:
            mask = np.ones((n, p + 1), dtype=np.int8)
            mask[:, 0] = np.isfinite(y)
            mask[:, 1:] = np.isfinite(X)
        else:
            mask = np.array(self.mask, dtype=np.int8, copy=True)
            if mask.shape != (n, p + 1):
                raise DataError(f"mask must have shape {(n, p + 1)}, got {mask.shape}")
            if not np.isin(mask, (0, 1)).all():
                raise DataError("mask entries must be 0 or 1")
        X[mask[:, 1:] == 0] = np.nan
        y[mask[:, 0] == 0] = np.nan
        if not np.isfinite(X[mask[:, 1:] == 1]).all() or not np.isfinite(y[mask[:, 0] == 1]).all():
            raise DataError("observed cells must be finite")
        names = list(self.feature_names) if self.feature_names is not None else [
            f"x{j + 1}" for j in range(p)
        ]
        if len(names) != p:
            raise DataError(f"expected {p} feature names, got {len(names)}")
        for arr in (X, y, mask):
            arr.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "outcome", y)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "feature_names", tuple(names))
        object.__setattr__(self, "_binary", _is_binary(y[mask[:, 0] == 1]))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def is_complete(self) -> bool:
        return bool(self.mask.all())

    @property
    def is_binary(self) -> bool:
        """True when the observed outcome support is exactly {0, 1}."""
        return self._binary

    def require_complete(self) -> "Dataset":
        if not self.is_complete:
            raise DataError("operation requires a complete dataset")
        return self

    def replace(self, features=None, outcome=None, mask=None) -> "Dataset":
        return Dataset(
            self.features if features is None else features,
            self.outcome if outcome is None else outcome,
            self.mask if mask is None else mask,
            self.feature_names,
            self.outcome_name,
        )


@dataclass(frozen=True)
class FoldAssignment:
    """Fold labels in ``1..K`` for each row."""

    folds: np.ndarray
    K: int

    def train_test(self, v: int):
        """Row indices (train, test) for fold ``v`` (1-based)."""
        held = self.folds == v
        return np.flatnonzero(~held), np.flatnonzero(held)


def _balanced_labels(m: int, K: int, offset: int, rng: np.random.Generator) -> np.ndarray:
    labels = (np.arange(m) + offset) % K + 1
    return rng.permutation(labels)


def make_folds(dataset: Dataset | np.ndarray, K: int, seed: int = 0) -> FoldAssignment:
    """Assign rows to ``K`` folds, stratifying by class for binary outcomes.

    Fold sizes differ by at most one. For binary outcomes each class is dealt
    round-robin so that every fold receives both classes.
    """
    y = dataset.outcome if isinstance(dataset, Dataset) else np.asarray(dataset, dtype=float)
    n = y.shape[0]
    if K < 2:
        raise DataError("K must be at least 2")
    if n < 2 * K:
        raise DataError(f"need at least 2K = {2 * K} rows, got {n}")
    rng = np.random.default_rng(seed)
    folds = np.empty(n, dtype=np.int64)
    binary = dataset.is_binary if isinstance(dataset, Dataset) else _is_binary(y)
    if binary:
        offset = 0
        for cls in (0.0, 1.0):
            idx = np.flatnonzero(y == cls)
            if idx.size < K:
                raise DataError(f"class {int(cls)} has {idx.size} rows, fewer than K = {K}")
            folds[idx] = _balanced_labels(idx.size, K, offset, rng)
            # continue the deal where the first class stopped to keep sizes balanced
            offset = (offset + idx.size) % K
    else:
        folds[:] = _balanced_labels(n, K, 0, rng)
    folds.setflags(write=False)
    return FoldAssignment(folds, K)


def load_csv(path, outcome_column: str, na_token: str = "NA") -> Dataset:
    """Read a headered CSV into a :class:`Dataset`.

    Cells equal to ``na_token`` are marked missing; every other cell must
    parse as a float.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if outcome_column not in header:
        raise DataError(f"{path}: outcome column '{outcome_column}' not found")
    body = [r for r in rows[1:] if r]
    if not body:
        raise DataError(f"{path}: no data rows")
    n, width = len(body), len(header)
    values = np.zeros((n, width))
    observed = np.ones((n, width), dtype=np.int8)
    for i, row in enumerate(body):
        if len(row) != width:
            raise DataError(f"{path}: row {i + 2} has {len(row)} fields, expected {width}")
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell == na_token:
                observed[i, j] = 0
                continue
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: cannot parse '{cell}' at row {i + 2}, column '{header[j]}'"
                ) from None
    yj = header.index(outcome_column)
    cols = [j for j in range(width) if j != yj]
    mask = np.column_stack([observed[:, yj], observed[:, cols]])
    return Dataset(
        values[:, cols], values[:, yj], mask,
        feature_names=[header[j] for j in cols], outcome_name=outcome_column,
    )


def _fmt(v: float) -> str:
    return repr(float(v))


def write_csv(dataset: Dataset, path, na_token: str = "NA") -> None:
    """Write ``dataset`` with the outcome as the first column."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([dataset.outcome_name, *dataset.feature_names])
        for i in range(dataset.n):
            row = [_fmt(dataset.outcome[i]) if dataset.mask[i, 0] else na_token]
            row += [
                _fmt(dataset.features[i, j]) if dataset.mask[i, j + 1] else na_token
                for j in range(dataset.p)
            ]
            w.writerow(row)
