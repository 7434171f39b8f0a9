"""
RegCal - Reference Oracles
Independent closed-form and brute-force references used to cross-check the library
"""

from typing import Optional

import numpy as np
from scipy import optimize, stats

from ..core import CalibrationDataset, CauchyPrediction, Distribution, GaussianPrediction
from ..errors import DataError


def coverage_oracle(dataset: CalibrationDataset, predictions: Optional[Distribution] = None,
                    tau: float = 0.5) -> np.ndarray:
    """
    Fraction of samples with y <= q_tau per dimension, computed with scipy.stats
    quantile functions (grid CDFs by direct linear interpolation).

    Returns:
        (K,) empirical coverage
    """
    if not 0.0 < tau < 1.0:
        raise DataError("tau must lie in (0, 1)")
    predictions = dataset.prediction if predictions is None else predictions
    y = dataset.ground_truth
    if isinstance(predictions, GaussianPrediction):
        q = stats.norm.ppf(tau, loc=predictions.mean, scale=np.sqrt(predictions.variances))
    elif isinstance(predictions, CauchyPrediction):
        q = stats.cauchy.ppf(tau, loc=predictions.loc, scale=predictions.scale)
    else:
        clamped = np.clip(predictions.cdf, predictions.eps, 1.0 - predictions.eps)
        q = np.array([
            [np.interp(tau, clamped[i, :, d], predictions.support[i, :, d]) for d in range(y.shape[1])]
            for i in range(y.shape[0])
        ])
    return (y <= q).mean(axis=0)


def expected_coverage(miscal: float, tau: float) -> float:
    """Coverage of the tau-quantile when the stated sigma is miscal times the true sigma."""
    return float(stats.norm.cdf(miscal * stats.norm.ppf(tau)))


def correlated_nll_gain(rho: float) -> float:
    """Per-sample NLL gain of the true bivariate covariance over its diagonal: -1/2 ln(1 - rho^2)."""
    return float(-0.5 * np.log1p(-rho ** 2))


def golden_variance_weight(z_sq: np.ndarray) -> float:
    """Variance weight minimising the Gaussian NLL by golden-section search over log w."""
    mean_sq = float(np.mean(z_sq))
    t = optimize.golden(lambda t: 0.5 * (t + mean_sq * np.exp(-t)), brack=(-5.0, 5.0), tol=1e-12)
    return float(np.exp(t))


def exhaustive_isotonic(values: np.ndarray) -> np.ndarray:
    """
    L2-optimal nondecreasing fit by dynamic programming over every candidate level.

    The optimal fit only takes values equal to means of contiguous blocks, so
    searching those levels is exact. Intended for short sequences.
    """
    values = np.asarray(values, dtype=float)
    n = values.size
    levels = np.unique([values[i:j].mean() for i in range(n) for j in range(i + 1, n + 1)])
    cost = (values[0] - levels) ** 2
    choice = np.zeros((n, levels.size), dtype=int)
    for i in range(1, n):
        best_prev = np.minimum.accumulate(cost)
        arg_prev = np.array([int(np.argmin(cost[:g + 1])) for g in range(levels.size)])
        cost = best_prev + (values[i] - levels) ** 2
        choice[i] = arg_prev
    fit = np.empty(n)
    g = int(np.argmin(cost))
    for i in range(n - 1, -1, -1):
        fit[i] = levels[g]
        g = choice[i, g]
    return fit
