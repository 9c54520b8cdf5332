"""Monotone single-index mixture cure model (mSIC).

Isotonic-regression-based maximum likelihood estimation of a monotone
incidence link, EM-based joint estimation with a Cox proportional
hazards latency, plus simulation, metric, and bootstrap tooling.
"""

from msic.data_model import (
    IndexCoefficients,
    LatencyParams,
    ModelParams,
    MonotoneStepLink,
    SurvivalDataset,
    read_dataset_csv,
    validate_dataset,
    write_dataset_csv,
)
from msic.fit import FitConfig, bootstrap_ci, fit_logistic_cox, fit_method, fit_msic
from msic.isotonic import (
    IsotonicProblem,
    isotonic_ls,
    isotonic_mle_truncated,
    range_regularized_isotonic,
    select_truncation_cv,
)
from msic.latency import survival_uncured, weighted_breslow, weighted_cox_beta
from msic.link_em import estep_weights, fit_link
from msic.metrics import coef_bias_variance, epecp, mse_cure_grid, prediction_error
from msic.simgen import ExperimentSpec, generate, link_value, preset, summarize
from msic.smoothing import SmoothedLink, default_bandwidth, smooth_link, triweight_cdf

__version__ = "0.1.0"

__all__ = [
    "SurvivalDataset", "IndexCoefficients", "LatencyParams", "MonotoneStepLink",
    "ModelParams", "validate_dataset", "read_dataset_csv", "write_dataset_csv",
    "IsotonicProblem", "isotonic_ls", "isotonic_mle_truncated",
    "range_regularized_isotonic", "select_truncation_cv",
    "SmoothedLink", "smooth_link", "default_bandwidth", "triweight_cdf",
    "weighted_cox_beta", "weighted_breslow", "survival_uncured",
    "estep_weights", "fit_link",
    "FitConfig", "fit_msic", "fit_logistic_cox", "fit_method", "bootstrap_ci",
    "ExperimentSpec", "preset", "generate", "summarize", "link_value",
    "mse_cure_grid", "coef_bias_variance", "prediction_error", "epecp",
]
