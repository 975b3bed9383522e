import numpy as np
import pytest
from scipy.stats import norm

from flevr.data import Dataset


def binary_dataset(n, p, coef=None, seed=0, intercept=0.0):
    """Probit outcome on iid normal features; ``coef`` pads with zeros."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    b = np.zeros(p)
    if coef is not None:
        b[: len(coef)] = coef
    y = (rng.random(n) < norm.cdf(intercept + X @ b)).astype(float)
    return Dataset(X, y)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(REPORT):
            terminalreporter.write_line(line)
