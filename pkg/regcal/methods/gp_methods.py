"""
RegCal - GP Recalibration Methods
Fit wrappers and apply paths for GP-Beta, GP-Normal, GP-Cauchy, multivariate
GP-Normal and the covariance estimation / recalibration heads
"""

import logging
from typing import Optional

import numpy as np

from ..config import get_settings
from ..core import CalibrationDataset, CauchyPrediction, GaussianPrediction, NonparametricDistribution, cdf
from ..errors import DataError, NotFittedError
from ..gp import GPCalibrator, SVGPConfig, fit_svgp, posterior_weights
from .covariance import CorrelationTemplate, base_factors, correlation_template, rescale_ldl
from .heads import beta_link, make_head
from .isotonic import output_grid

logger = logging.getLogger(__name__)

# rows of the output grid evaluated together in the GP-Beta apply path
BETA_CHUNK = 64


def _draws(calibrator: Optional[GPCalibrator], tag: str, prediction: GaussianPrediction,
           mc_samples: Optional[int], seed: Optional[int]) -> np.ndarray:
    if calibrator is None:
        raise NotFittedError("GP calibrator is not fitted")
    if calibrator.head != tag:
        raise DataError(f"calibrator head is {calibrator.head!r}, expected {tag!r}")
    mc_samples = mc_samples or calibrator.config.mc_samples
    seed = calibrator.config.seed if seed is None else seed
    return posterior_weights(calibrator, prediction, mc_samples, seed)


def _rescale_gaussian(prediction: GaussianPrediction, w: np.ndarray) -> GaussianPrediction:
    """Multiply marginal variances by w, keeping correlations of full covariances."""
    if not prediction.is_full:
        return GaussianPrediction(mean=prediction.mean, var=prediction.var * w)
    root = np.sqrt(w)
    return GaussianPrediction(mean=prediction.mean,
                              cov=prediction.cov * root[:, :, None] * root[:, None, :])


# ============================================================================
# Fit
# ============================================================================

def gp_beta_fit(dataset: CalibrationDataset, config: Optional[SVGPConfig] = None) -> GPCalibrator:
    return fit_svgp(dataset, make_head("beta"), config)


def gp_normal_fit(dataset: CalibrationDataset, config: Optional[SVGPConfig] = None) -> GPCalibrator:
    return fit_svgp(dataset, make_head("normal"), config)


def gp_cauchy_fit(dataset: CalibrationDataset, config: Optional[SVGPConfig] = None) -> GPCalibrator:
    return fit_svgp(dataset, make_head("cauchy"), config)


def gp_normal_mv_fit(dataset: CalibrationDataset, config: Optional[SVGPConfig] = None) -> GPCalibrator:
    return fit_svgp(dataset, make_head("normal_mv"), config)


def gp_cov_est_fit(dataset: CalibrationDataset, config: Optional[SVGPConfig] = None) -> GPCalibrator:
    """Covariance estimation: template correlations rescaled per sample."""
    template = correlation_template(dataset)
    extras = {"mode": "estimate", "template": template.to_payload()}
    return fit_svgp(dataset, make_head("covariance", "estimate"), config, extras)


def gp_cov_recal_fit(dataset: CalibrationDataset, config: Optional[SVGPConfig] = None) -> GPCalibrator:
    """Covariance recalibration of full predicted covariances."""
    return fit_svgp(dataset, make_head("covariance", "recalibrate"), config, {"mode": "recalibrate"})


# ============================================================================
# Apply
# ============================================================================

def gp_beta_apply(calibrator: GPCalibrator, prediction: GaussianPrediction,
                  mc_samples: Optional[int] = None, seed: Optional[int] = None,
                  grid_size: Optional[int] = None) -> NonparametricDistribution:
    """
    Calibrated CDF as the posterior mean of beta-warped input CDFs.

    Returns:
        NonparametricDistribution on a per-sample quantile grid of the input
    """
    draws = _draws(calibrator, "beta", prediction, mc_samples, seed)
    size = grid_size or get_settings().grid_size
    support = np.empty((prediction.n, size, prediction.k))
    values = np.empty_like(support)

    for d in range(prediction.k):
        a = np.exp(draws[:, :, 3 * d])
        b = np.exp(draws[:, :, 3 * d + 1])
        c = draws[:, :, 3 * d + 2]
        grid = output_grid(prediction, d, size)
        p = cdf(prediction, grid, d)
        for start in range(0, prediction.n, BETA_CHUNK):
            rows = slice(start, start + BETA_CHUNK)
            warped = beta_link(p[None, rows], a[:, rows, None], b[:, rows, None], c[:, rows, None])
            values[rows, :, d] = warped.mean(axis=0)
        support[:, :, d] = grid
    return NonparametricDistribution(support=support, cdf=values)


def gp_normal_apply(calibrator: GPCalibrator, prediction: GaussianPrediction,
                    mc_samples: Optional[int] = None, seed: Optional[int] = None) -> GaussianPrediction:
    """sigma_hat^2 = E[w] sigma^2 with w = exp(latent); the mean is passed through."""
    draws = _draws(calibrator, "normal", prediction, mc_samples, seed)
    return _rescale_gaussian(prediction, np.exp(draws).mean(axis=0))


def gp_cauchy_apply(calibrator: GPCalibrator, prediction: GaussianPrediction,
                    mc_samples: Optional[int] = None, seed: Optional[int] = None) -> CauchyPrediction:
    """Cauchy(x0 = mu, gamma = E[w] sigma)."""
    draws = _draws(calibrator, "cauchy", prediction, mc_samples, seed)
    return CauchyPrediction(loc=prediction.mean, scale=np.exp(draws).mean(axis=0) * prediction.std)


def gp_normal_mv_apply(calibrator: GPCalibrator, prediction: GaussianPrediction,
                       mc_samples: Optional[int] = None, seed: Optional[int] = None) -> GaussianPrediction:
    """Full covariance diag(sqrt E[w]) Sigma diag(sqrt E[w])."""
    draws = _draws(calibrator, "normal_mv", prediction, mc_samples, seed)
    w = np.exp(draws).mean(axis=0)
    root = np.sqrt(w)
    cov = prediction.covariance() * root[:, :, None] * root[:, None, :]
    return GaussianPrediction(mean=prediction.mean, cov=cov)


def covariance_head_apply(calibrator: GPCalibrator, prediction: GaussianPrediction,
                          template: Optional[CorrelationTemplate] = None,
                          mc_samples: Optional[int] = None,
                          seed: Optional[int] = None) -> GaussianPrediction:
    """
    Sigma_hat = L_hat D_hat L_hat^T from posterior mean weights.

    Estimation mode rescales the template covariance (the fitted template unless one
    is passed); recalibration mode rescales the prediction's own covariance.
    """
    draws = _draws(calibrator, "covariance", prediction, mc_samples, seed)
    mode = calibrator.extras.get("mode", "estimate")
    if mode == "estimate" and template is None:
        template = CorrelationTemplate.from_payload(calibrator.extras["template"])
    if mode == "recalibrate":
        template = None

    k = prediction.k
    w_diag = np.exp(draws[:, :, :k]).mean(axis=0)
    rows, cols = np.tril_indices(k)
    w_lower = np.zeros((prediction.n, k, k))
    w_lower[:, rows, cols] = 1.0 + draws[:, :, k:].mean(axis=0)

    unit_lower, d = base_factors(prediction, template)
    return GaussianPrediction(mean=prediction.mean, cov=rescale_ldl(unit_lower, d, w_lower, w_diag))
