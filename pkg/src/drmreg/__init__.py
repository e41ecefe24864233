"""Semiparametric density ratio models for fusing multiple samples.

Fit ``g_j(t) = exp(alpha_j + beta_j' t) g(t)`` by profile empirical likelihood,
derive sandwich standard errors and Wald tests, estimate tilted kernel
densities and the regression of a response on covariates, and score the fit.
"""
from .core import (
    DegenerateDataError,
    DimensionError,
    DRMError,
    ModelParams,
    NumericOverflowError,
    SampleSet,
    TiltWeights,
    log_tilt,
    tilt_weights,
)
from .diagnostics import GofReport, gof_report, r2_1, r2_2, r2_3, r2_alpha_k
from .estimation import (
    ConvergenceError,
    ConvergenceWarning,
    FitOptions,
    FittedModel,
    SingularHessianError,
    StepCdf,
    fit,
    p_hat,
    profile_loglik,
    reference_cdf,
    tilted_cdf,
)
from .inference import asymptotic_covariance, standard_errors, wald_test
from .regression import (
    NoEffectiveSupportError,
    TiltedKde,
    kde_eval,
    nadaraya_watson,
    ols_fit,
    predict,
    predict_many,
)
from .simulation import Scenario, load_scenario, benchmark_scenarios, run_study

__version__ = "0.1.0"

__all__ = [
    "DRMError", "DimensionError", "DegenerateDataError", "NumericOverflowError",
    "SampleSet", "ModelParams", "TiltWeights", "tilt_weights", "log_tilt",
    "FitOptions", "FittedModel", "StepCdf", "ConvergenceError", "ConvergenceWarning",
    "SingularHessianError", "fit", "p_hat", "profile_loglik", "reference_cdf",
    "tilted_cdf", "asymptotic_covariance", "standard_errors", "wald_test",
    "NoEffectiveSupportError", "TiltedKde", "kde_eval", "predict", "predict_many",
    "nadaraya_watson", "ols_fit", "GofReport", "gof_report", "r2_alpha_k", "r2_1",
    "r2_2", "r2_3", "Scenario", "load_scenario", "benchmark_scenarios", "run_study",
]
