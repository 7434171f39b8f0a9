"""
RegCal - Recalibration Methods
Isotonic Regression and Variance Scaling baselines plus the GP recalibration heads
"""

from .covariance import CorrelationTemplate, correlation_template, rescale_ldl
from .gp_methods import (
    covariance_head_apply,
    gp_beta_apply,
    gp_beta_fit,
    gp_cauchy_apply,
    gp_cauchy_fit,
    gp_cov_est_fit,
    gp_cov_recal_fit,
    gp_normal_apply,
    gp_normal_fit,
    gp_normal_mv_apply,
    gp_normal_mv_fit,
)
from .heads import BetaHead, CauchyHead, CovarianceHead, NormalHead, NormalMVHead, beta_link, make_head
from .isotonic import IsotonicCalibrator, isotonic_apply, isotonic_fit, pool_adjacent_violators
from .registry import (
    METHODS,
    Calibrator,
    apply_calibrator,
    calibrator_payload,
    fit_calibrator,
    load_calibrator,
)
from .variance_scaling import VarianceScaler, variance_scaling_apply, variance_scaling_fit

__all__ = [
    # Baselines
    "IsotonicCalibrator",
    "isotonic_fit",
    "isotonic_apply",
    "pool_adjacent_violators",
    "VarianceScaler",
    "variance_scaling_fit",
    "variance_scaling_apply",
    # Heads
    "beta_link",
    "NormalHead",
    "CauchyHead",
    "NormalMVHead",
    "BetaHead",
    "CovarianceHead",
    "make_head",
    # Covariance
    "CorrelationTemplate",
    "correlation_template",
    "rescale_ldl",
    # GP methods
    "gp_beta_fit",
    "gp_beta_apply",
    "gp_normal_fit",
    "gp_normal_apply",
    "gp_cauchy_fit",
    "gp_cauchy_apply",
    "gp_normal_mv_fit",
    "gp_normal_mv_apply",
    "gp_cov_est_fit",
    "gp_cov_recal_fit",
    "covariance_head_apply",
    # Registry
    "METHODS",
    "Calibrator",
    "fit_calibrator",
    "apply_calibrator",
    "calibrator_payload",
    "load_calibrator",
]
