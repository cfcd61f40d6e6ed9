from .features import DESCRIPTORS, TARGET, FeatureTable, read_feature_table
from .forest import (
    CVResult,
    ForestConfig,
    ForestModel,
    fit_forest,
    gini_importance,
    kfold_cv,
    kfold_indices,
    permutation_importance,
)
from .rng import Xorshift64Star
from .stats import mae, pearson, r2_score

__all__ = [
    "CVResult",
    "DESCRIPTORS",
    "FeatureTable",
    "ForestConfig",
    "ForestModel",
    "TARGET",
    "Xorshift64Star",
    "fit_forest",
    "gini_importance",
    "kfold_cv",
    "kfold_indices",
    "mae",
    "pearson",
    "permutation_importance",
    "r2_score",
    "read_feature_table",
]
