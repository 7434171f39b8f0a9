"""
RegCal - Multivariate Consistency Statistics
NEES, standardized generalized variance and chi-square acceptance thresholds
"""

from typing import Union

import numpy as np
from scipy.stats import chi2

from ..core import GaussianPrediction, cholesky, mahalanobis_sq
from ..core.linalg import logdet_from_cholesky
from ..errors import DataError


def nees(prediction: GaussianPrediction, y: np.ndarray) -> np.ndarray:
    """
    Normalized estimation error squared (y - mu)^T Sigma^-1 (y - mu) per sample.

    Args:
        prediction: Gaussian predictions, diagonal or full covariance
        y: (N, K) ground truth

    Returns:
        (N,) nonnegative squared Mahalanobis distances
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if y.shape != prediction.mean.shape:
        raise DataError(f"targets {y.shape} do not match predictions {prediction.mean.shape}")
    residual = y - prediction.mean
    if not prediction.is_full:
        return (residual ** 2 / prediction.var).sum(axis=1)
    return mahalanobis_sq(residual, prediction.cov)


def sgv(cov: Union[np.ndarray, GaussianPrediction]) -> np.ndarray:
    """
    Standardized generalized variance det(Sigma)^(1/K).

    Args:
        cov: (K, K) matrix, (N, K, K) stack or a GaussianPrediction

    Returns:
        Scalar for a single matrix, (N,) otherwise
    """
    if isinstance(cov, GaussianPrediction):
        if not cov.is_full:
            return np.exp(np.log(cov.var).mean(axis=1))
        cov = cov.cov
    cov = np.asarray(cov, dtype=float)
    k = cov.shape[-1]
    return np.exp(logdet_from_cholesky(cholesky(cov)) / k)


def chi2_quantile(dof: int, tau: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    Acceptance threshold a_tau with chi2_K CDF(a_tau) = tau.

    Args:
        dof: degrees of freedom K >= 1
        tau: level(s) in (0, 1)
    """
    if dof < 1:
        raise DataError("degrees of freedom must be at least 1")
    tau_arr = np.asarray(tau, dtype=float)
    if not np.all((tau_arr > 0) & (tau_arr < 1)):
        raise DataError("tau must lie in (0, 1)")
    value = chi2.ppf(tau_arr, dof)
    return float(value) if np.ndim(value) == 0 else value
