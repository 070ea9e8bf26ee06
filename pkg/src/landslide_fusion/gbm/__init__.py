"""Histogram gradient-boosted decision trees for binary classification."""
from .binning import BinnedMatrix, apply_bins, feature_cuts, quantile_bin
from .booster import (
    PRESETS,
    FeatureImportance,
    GbmConfig,
    GbmModel,
    Tree,
    compute_feature_importance,
    fit_gbm,
    logistic_grad_hess,
    predict_gbm,
    predict_raw,
    weighted_logloss,
)

__all__ = [
    "PRESETS", "BinnedMatrix", "FeatureImportance", "GbmConfig", "GbmModel", "Tree",
    "apply_bins", "compute_feature_importance", "feature_cuts", "fit_gbm",
    "logistic_grad_hess", "predict_gbm", "predict_raw", "quantile_bin", "weighted_logloss",
]
