"""Data-generating scenarios 1-8 for binary-outcome selection experiments.

Outcomes follow a probit model ``P(Y = 1 | x) = Phi(beta0 + f(beta, x))``.
Feature indices below are 0-based unless stated otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import gamma
from typing import Optional

import numpy as np
from scipy.stats import norm

from ..data import Dataset
from ..missingness import AmputationSpec, ampute
from ..predictiveness import auc

SCENARIOS = tuple(range(1, 9))
MIX_BETA = (-1.0, 1.0, -0.5, 0.5, 1 / 3, -1 / 3)
WEAK_BETA = (0.0, 1.0, 0.0, 0.0, 0.0, 1.0)

# Weibull(shape 1.75, scale 1.9) and Lognormal(meanlog 0.5, sdlog 0.5) moments
_WB_K, _WB_L = 1.75, 1.9
_LN_MU, _LN_S = 0.5, 0.5
_NONNORMAL_MOMENTS = (
    (0.5, 1.0),
    (0.5, 0.5),
    (_WB_L * gamma(1 + 1 / _WB_K), _WB_L * np.sqrt(gamma(1 + 2 / _WB_K) - gamma(1 + 1 / _WB_K) ** 2)),
    (np.exp(_LN_MU + _LN_S ** 2 / 2), np.sqrt((np.exp(_LN_S ** 2) - 1) * np.exp(2 * _LN_MU + _LN_S ** 2))),
    (0.5, 0.5),
    (0.25, 1.0),
)


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    """One data-generating configuration.

    Attributes
    ----------
    id : int
        Scenario number, 1 to 8.
    p : int
    outcome_form : {"linear", "nonlinear-s2", "nonlinear-s345"}
    feature_dist : {"iid-normal", "correlated-normal", "nonnormal"}
    beta0 : float
    beta : tuple of float
        Linear coefficients (length ``p``) for the linear form, two
        coefficients for ``nonlinear-s2`` and six for ``nonlinear-s345``.
    missing_prop : float
        Maximum per-column missing proportion (0 for complete data).
    rho1, rho2 : float
        Correlations for ``correlated-normal``.
    active : tuple of int
        Features sharing correlation ``rho2``.
    """

    id: int
    p: int
    outcome_form: str
    feature_dist: str
    beta0: float = 0.5
    beta: tuple = ()
    missing_prop: float = 0.0
    rho1: float = 0.0
    rho2: float = 0.0
    active: tuple = ()

    @property
    def truth(self) -> tuple:
        """Features the outcome depends on (0-based)."""
        b = self.beta
        if self.outcome_form == "linear":
            return tuple(j for j in range(self.p) if b[j] != 0)
        if self.outcome_form == "nonlinear-s2":
            return tuple(sorted(({1, 2} if b[0] != 0 else set()) | ({5} if b[1] != 0 else set())))
        # terms: 1 -> x1; 2 -> x2, x3; 3 -> x3; 4 -> x4; 5 -> x5, x1; 6 -> x6
        uses = ({0}, {1, 2}, {2}, {3}, {4, 0}, {5})
        out = set()
        for coef, cols in zip(b, uses):
            if coef != 0:
                out |= cols
        return tuple(sorted(out))

    @property
    def s0(self) -> int:
        return len(self.truth)


def scenario_spec(scenario: int, p: Optional[int] = None, missing_prop: float = 0.0,
                  beta: Optional[tuple] = None) -> ScenarioSpec:
    """Configuration for scenario ``scenario``; ``beta`` overrides the coefficients."""
    if scenario not in SCENARIOS:
        raise ScenarioError(f"scenario must be one of {SCENARIOS}, got {scenario}")
    if missing_prop not in (0, 0.0) and not 0 < missing_prop < 1:
        raise ScenarioError("missing_prop must lie in [0, 1)")
    default_p = 30 if scenario in (1, 3, 4, 5) else 6
    p = default_p if p is None else int(p)
    if p < 6:
        raise ScenarioError("scenarios need p >= 6")
    if scenario in (1, 3):
        spec = ScenarioSpec(scenario, p, "linear", "iid-normal" if scenario == 1 else "nonnormal",
                            beta=MIX_BETA + (0.0,) * (p - 6))
    elif scenario in (4, 5):
        spec = ScenarioSpec(scenario, p, "nonlinear-s345", "iid-normal" if scenario == 4 else "nonnormal",
                            beta=MIX_BETA)
    elif scenario == 2:
        spec = ScenarioSpec(2, p, "nonlinear-s2", "correlated-normal", beta=(1.0, 1.0),
                            rho1=0.3, rho2=0.95, active=(1, 2, 5))
    elif scenario == 6:
        spec = ScenarioSpec(6, p, "linear", "iid-normal", beta=WEAK_BETA + (0.0,) * (p - 6))
    elif scenario == 7:
        spec = ScenarioSpec(7, p, "linear", "correlated-normal", beta=WEAK_BETA + (0.0,) * (p - 6),
                            rho1=0.3, rho2=0.95, active=(1, 5))
    else:
        spec = ScenarioSpec(8, p, "nonlinear-s345", "iid-normal", beta=WEAK_BETA)
    if beta is not None:
        beta = tuple(float(b) for b in beta)
        if len(beta) != len(spec.beta):
            raise ScenarioError(f"scenario {scenario} needs {len(spec.beta)} coefficients")
        spec = replace(spec, beta=beta)
    return replace(spec, missing_prop=float(missing_prop))


def covariance(spec: ScenarioSpec) -> np.ndarray:
    """Feature covariance for correlated-normal scenarios.

    Unit diagonal, ``rho2`` between two active features, ``rho1**|i-j|``
    between two inactive features, and 0 between an active and an inactive
    feature.
    """
    p = spec.p
    idx = np.arange(p)
    act = np.isin(idx, spec.active)
    S = spec.rho1 ** np.abs(idx[:, None] - idx[None, :]).astype(float)
    S[np.ix_(act, act)] = spec.rho2
    S[np.ix_(act, ~act)] = 0.0
    S[np.ix_(~act, act)] = 0.0
    np.fill_diagonal(S, 1.0)
    return S


def draw_features(spec: ScenarioSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    p = spec.p
    if spec.feature_dist == "iid-normal":
        return rng.standard_normal((n, p))
    if spec.feature_dist == "correlated-normal":
        C = np.linalg.cholesky(covariance(spec))
        return rng.standard_normal((n, p)) @ C.T
    if spec.feature_dist == "nonnormal":
        X = rng.standard_normal((n, p))
        X[:, 0] = rng.normal(0.5, 1.0, n)
        X[:, 1] = rng.binomial(1, 0.5, n)
        X[:, 2] = _WB_L * rng.weibull(_WB_K, n)
        X[:, 3] = rng.lognormal(_LN_MU, _LN_S, n)
        X[:, 4] = rng.binomial(1, 0.5, n)
        X[:, 5] = rng.normal(0.25, 1.0, n)
        return X
    raise ScenarioError(f"unknown feature distribution '{spec.feature_dist}'")


def _standardized(spec, X):
    """Center and scale the first six features by their known moments."""
    C = X[:, :6].copy()
    if spec.feature_dist == "nonnormal":
        for j, (m, s) in enumerate(_NONNORMAL_MOMENTS):
            C[:, j] = (C[:, j] - m) / s
    return C


def linear_predictor(spec: ScenarioSpec, X: np.ndarray) -> np.ndarray:
    """``beta0 + f(beta, x)`` for each row of ``X``."""
    b = spec.beta
    if spec.outcome_form == "linear":
        f = X @ np.asarray(b)
    elif spec.outcome_form == "nonlinear-s2":
        f = 2 * (b[0] * X[:, 1] * X[:, 2] - b[1] * np.tanh(X[:, 5]))
    elif spec.outcome_form == "nonlinear-s345":
        c = _standardized(spec, X)
        f = 2 * (
            b[0] * np.sin(np.pi / 4 * c[:, 0])
            + b[1] * c[:, 1] * c[:, 2]
            + b[2] * np.tanh(c[:, 2])
            + b[3] * np.cos(np.pi / 4 * c[:, 3])
            + b[4] * c[:, 4] * c[:, 0]
            - b[5] * np.tanh(c[:, 5])
        )
    else:
        raise ScenarioError(f"unknown outcome form '{spec.outcome_form}'")
    return spec.beta0 + f


def amputation_spec(spec: ScenarioSpec) -> AmputationSpec:
    """Outcome, X1, X3, X5 always observed; (X2, X4, X6) monotone; some noise features MAR."""
    n_noise = 40 if spec.p >= 500 else (3 if spec.p >= 30 else 0)
    noise = tuple(range(6, min(spec.p, 6 + n_noise)))
    return AmputationSpec(
        always_observed=(0, 2, 4), monotone_chain=(1, 3, 5), independent_missing=noise,
        max_prop=spec.missing_prop, weight_features=(0, 2, 4),
    )


def gen_scenario(spec: ScenarioSpec, n: int, seed: int = 0) -> tuple[Dataset, tuple]:
    """Draw ``n`` rows; returns the (possibly amputed) dataset and the true active set."""
    if n < 1:
        raise ScenarioError("n must be positive")
    data_seed, amp_seed = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(data_seed)
    X = draw_features(spec, n, rng)
    y = (rng.random(n) < norm.cdf(linear_predictor(spec, X))).astype(float)
    ds = Dataset(X, y)
    if spec.missing_prop > 0:
        ds = ampute(ds, amputation_spec(spec), seed=int(amp_seed.generate_state(1)[0]))
    return ds, spec.truth


def optimal_auc(spec: ScenarioSpec, mc_n: int = 100_000, seed: int = 0) -> float:
    """Monte Carlo AUC of the true success probability against simulated outcomes."""
    if mc_n < 10_000:
        raise ScenarioError("mc_n must be at least 10000")
    rng = np.random.default_rng(seed)
    X = draw_features(spec, mc_n, rng)
    prob = norm.cdf(linear_predictor(spec, X))
    y = (rng.random(mc_n) < prob).astype(int)
    return auc(prob, y)
