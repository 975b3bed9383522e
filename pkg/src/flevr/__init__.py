"""Intrinsic variable selection with Shapley importance, multiple imputation
and error-rate control."""

from .data import Dataset, DataError, FoldAssignment, load_csv, make_folds, write_csv
from .learners import (
    BoostedStumps,
    EnsembleModel,
    FittedModel,
    KNNRegressor,
    LearnerSpec,
    RidgeLinear,
    RidgeLogistic,
    default_library,
    fit,
    fit_stack,
    predict,
    screen_by_rank_correlation,
)
from .missingness import (
    AmputationSpec,
    PooledEstimate,
    ampute,
    chain_violations,
    mice_impute,
    pool_rubin,
)
from .predictiveness import PredictivenessEstimate, auc, auc_eif, cv_predictiveness, r_squared, r_squared_eif
from .selection import (
    IntrinsicSelector,
    SelectionConfig,
    SelectionResult,
    TestResults,
    augment,
    choose_k_q,
    holm_adjust,
    initial_set,
    select,
    test_statistics,
)
from .spvim import SPVIM, SpvimEstimate, SubsetSample, estimate_spvim, sample_subsets, shapley_exact, shapley_solve

__version__ = "0.1.0"

__all__ = [
    "SPVIM", "AmputationSpec", "BoostedStumps", "DataError", "Dataset", "EnsembleModel",
    "FittedModel", "FoldAssignment", "IntrinsicSelector", "KNNRegressor", "LearnerSpec",
    "PooledEstimate", "PredictivenessEstimate", "RidgeLinear", "RidgeLogistic", "SelectionConfig",
    "SelectionResult", "SpvimEstimate", "SubsetSample", "TestResults", "ampute", "auc", "auc_eif",
    "augment", "chain_violations", "choose_k_q", "cv_predictiveness", "default_library",
    "estimate_spvim", "fit", "fit_stack", "holm_adjust", "initial_set", "load_csv", "make_folds",
    "mice_impute", "pool_rubin", "predict", "r_squared", "r_squared_eif", "sample_subsets",
    "screen_by_rank_correlation", "select", "shapley_exact", "shapley_solve", "test_statistics",
    "write_csv",
]
