"""
RegCal - Regression Miscalibration Metrics
NLL, Pinball loss, UCE, ENCE, QCE and reliability curves
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np

from ..core import (
    CalibrationDataset,
    CauchyPrediction,
    Distribution,
    GaussianPrediction,
    log_density,
    log_density_dim,
    moments,
    quantile,
    spread,
)
from ..errors import DataError
from .binning import DEFAULT_BINS, QuantileGrid, equal_frequency_bins
from .multivariate import chi2_quantile, nees, sgv

logger = logging.getLogger(__name__)

Reduction = str  # "mean" or "none"


def _resolve(dataset: CalibrationDataset, predictions: Optional[Distribution]) -> Distribution:
    predictions = dataset.prediction if predictions is None else predictions
    if predictions.n != dataset.n or predictions.k != dataset.k:
        raise DataError(
            f"predictions ({predictions.n}, {predictions.k}) are not aligned with "
            f"dataset ({dataset.n}, {dataset.k})"
        )
    return predictions


def _reduce(values: np.ndarray, reduction: Reduction) -> Union[float, np.ndarray]:
    if reduction == "mean":
        return float(np.mean(values))
    if reduction == "none":
        return values
    raise DataError(f"unknown reduction {reduction!r}")


def _check_tau(tau: float) -> None:
    if not 0.0 < tau < 1.0:
        raise DataError(f"quantile level {tau} outside (0, 1)")


# ============================================================================
# Proper scoring rules
# ============================================================================

def nll(dataset: CalibrationDataset, predictions: Optional[Distribution] = None) -> float:
    """Mean negative joint log likelihood in nats per sample."""
    predictions = _resolve(dataset, predictions)
    return float(-np.mean(log_density(predictions, dataset.ground_truth)))


def nll_per_dim(dataset: CalibrationDataset,
                predictions: Optional[Distribution] = None) -> np.ndarray:
    """Mean negative marginal log likelihood per dimension, shape (K,)."""
    predictions = _resolve(dataset, predictions)
    return np.array([
        -np.mean(log_density_dim(predictions, dataset.ground_truth, d))
        for d in range(dataset.k)
    ])


def pinball(dataset: CalibrationDataset, predictions: Optional[Distribution] = None,
            tau: float = 0.5, reduction: Reduction = "mean") -> Union[float, np.ndarray]:
    """
    Pinball loss rho_tau(y - q_tau) averaged over samples (and dimensions).

    rho_tau(u) = tau * u for u >= 0 and (tau - 1) * u otherwise.
    """
    _check_tau(tau)
    predictions = _resolve(dataset, predictions)
    per_dim = np.empty(dataset.k)
    for d in range(dataset.k):
        diff = dataset.ground_truth[:, d] - quantile(predictions, tau, d)
        per_dim[d] = np.mean(np.where(diff >= 0, tau * diff, (tau - 1.0) * diff))
    return _reduce(per_dim, reduction)


def mean_pinball(dataset: CalibrationDataset, predictions: Optional[Distribution] = None,
                 levels: Optional[QuantileGrid] = None,
                 reduction: Reduction = "mean") -> Union[float, np.ndarray]:
    """Pinball loss averaged over a quantile grid."""
    levels = levels or QuantileGrid.default()
    stacked = np.stack([pinball(dataset, predictions, tau, "none") for tau in levels])
    return _reduce(stacked.mean(axis=0), reduction)


# ============================================================================
# Variance calibration (UCE / ENCE)
# ============================================================================

def _variance_moments(predictions: Distribution) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(predictions, CauchyPrediction):
        raise DataError("UCE/ENCE need a variance; the Cauchy distribution has none")
    return moments(predictions)


def uce(dataset: CalibrationDataset, predictions: Optional[Distribution] = None,
        bins: int = DEFAULT_BINS, reduction: Reduction = "mean") -> Union[float, np.ndarray]:
    """
    Uncertainty calibration error sum_m N_m/N |MSE(m) - MV(m)|.

    Bins are equal-frequency over the predicted variance of each dimension; empty
    bins carry zero weight.
    """
    predictions = _resolve(dataset, predictions)
    mean, var = _variance_moments(predictions)
    sq_err = (dataset.ground_truth - mean) ** 2
    per_dim = np.zeros(dataset.k)
    for d in range(dataset.k):
        scheme = equal_frequency_bins(var[:, d], bins)
        for members in scheme.members():
            if members.size == 0:
                continue
            gap = abs(sq_err[members, d].mean() - var[members, d].mean())
            per_dim[d] += members.size / dataset.n * gap
    return _reduce(per_dim, reduction)


def ence(dataset: CalibrationDataset, predictions: Optional[Distribution] = None,
         bins: int = DEFAULT_BINS, reduction: Reduction = "mean") -> Union[float, np.ndarray]:
    """
    Expected normalized calibration error (1/M') sum_m |RMSE(m) - RMV(m)| / RMV(m).

    M' counts the nonempty bins only.
    """
    predictions = _resolve(dataset, predictions)
    mean, var = _variance_moments(predictions)
    sq_err = (dataset.ground_truth - mean) ** 2
    per_dim = np.zeros(dataset.k)
    for d in range(dataset.k):
        scheme = equal_frequency_bins(var[:, d], bins)
        ratios = []
        for members in scheme.members():
            if members.size == 0:
                continue
            rmse = np.sqrt(sq_err[members, d].mean())
            rmv = np.sqrt(var[members, d].mean())
            ratios.append(abs(rmse - rmv) / rmv)
        per_dim[d] = np.mean(ratios)
    return _reduce(per_dim, reduction)


# ============================================================================
# Quantile calibration error
# ============================================================================

def _acceptance_dim(dataset: CalibrationDataset, predictions: Distribution,
                    tau: float, dim: int) -> np.ndarray:
    """Whether y falls into the central tau interval of one dimension."""
    y = dataset.ground_truth[:, dim]
    if isinstance(predictions, GaussianPrediction):
        z_sq = (y - predictions.mean[:, dim]) ** 2 / predictions.variances[:, dim]
        return z_sq <= chi2_quantile(1, tau)
    lower = quantile(predictions, 0.5 * (1.0 - tau), dim)
    upper = quantile(predictions, 0.5 * (1.0 + tau), dim)
    return (y >= lower) & (y <= upper)


def _binned_gap(accepted: np.ndarray, statistic: np.ndarray, tau: float,
                bins: int) -> Tuple[float, np.ndarray, np.ndarray]:
    scheme = equal_frequency_bins(statistic, bins)
    per_bin = np.zeros(bins)
    total = 0.0
    for m, members in enumerate(scheme.members()):
        if members.size == 0:
            continue
        per_bin[m] = abs(accepted[members].mean() - tau)
        total += members.size / accepted.size * per_bin[m]
    return total, per_bin, scheme.edges


def _mv_inputs(dataset: CalibrationDataset,
               predictions: Distribution) -> Tuple[np.ndarray, np.ndarray]:
    if not isinstance(predictions, GaussianPrediction):
        raise DataError("multivariate QCE is defined for Gaussian predictions only")
    return nees(predictions, dataset.ground_truth), np.sqrt(sgv(predictions))


def qce(dataset: CalibrationDataset, predictions: Optional[Distribution] = None,
        tau: float = 0.5, bins: int = DEFAULT_BINS, multivariate: bool = False,
        reduction: Reduction = "mean") -> Union[float, np.ndarray]:
    """
    Quantile calibration error sum_m N_m/N |freq(m) - tau|.

    Univariate: per dimension, freq(m) is the fraction of bin-m samples inside the
    central tau interval (for Gaussians, NEES <= chi2_1(tau)); bins over sigma.
    Multivariate: NEES over the joint covariance against chi2_K(tau); bins over
    sqrt(SGV). Returns a scalar in the multivariate case.
    """
    _check_tau(tau)
    predictions = _resolve(dataset, predictions)
    if multivariate:
        errors, statistic = _mv_inputs(dataset, predictions)
        accepted = errors <= chi2_quantile(dataset.k, tau)
        return _binned_gap(accepted, statistic, tau, bins)[0]

    per_dim = np.array([
        _binned_gap(_acceptance_dim(dataset, predictions, tau, d),
                    spread(predictions, d), tau, bins)[0]
        for d in range(dataset.k)
    ])
    return _reduce(per_dim, reduction)


def mean_qce(dataset: CalibrationDataset, predictions: Optional[Distribution] = None,
             levels: Optional[QuantileGrid] = None, bins: int = DEFAULT_BINS,
             multivariate: bool = False,
             reduction: Reduction = "mean") -> Union[float, np.ndarray]:
    """QCE averaged over a quantile grid."""
    levels = levels or QuantileGrid.default()
    if multivariate:
        return float(np.mean([qce(dataset, predictions, tau, bins, True) for tau in levels]))
    stacked = np.stack([qce(dataset, predictions, tau, bins, False, "none") for tau in levels])
    return _reduce(stacked.mean(axis=0), reduction)


@dataclass(frozen=True)
class QCEMap:
    """Per-bin QCE averaged over the quantile grid, one row per bin."""
    label: str
    edges: np.ndarray
    counts: np.ndarray
    values: np.ndarray

    def rows(self) -> List[Tuple[float, float, int, float]]:
        return [
            (float(self.edges[m]), float(self.edges[m + 1]), int(self.counts[m]), float(self.values[m]))
            for m in range(self.values.size)
        ]


def qce_map(dataset: CalibrationDataset, predictions: Optional[Distribution] = None,
            levels: Optional[QuantileGrid] = None, bins: int = DEFAULT_BINS,
            multivariate: bool = False) -> List[QCEMap]:
    """
    Reliability table of the QCE: bin edges, sample counts and |freq - tau| per bin
    averaged over levels. One map per dimension, or a single multivariate map.
    """
    predictions = _resolve(dataset, predictions)
    levels = levels or QuantileGrid.default()

    if multivariate:
        errors, statistic = _mv_inputs(dataset, predictions)
        targets = [("mv", statistic, lambda tau: errors <= chi2_quantile(dataset.k, tau))]
    else:
        targets = [
            (str(d), spread(predictions, d),
             lambda tau, d=d: _acceptance_dim(dataset, predictions, tau, d))
            for d in range(dataset.k)
        ]

    maps = []
    for label, statistic, accept in targets:
        scheme = equal_frequency_bins(statistic, bins)
        per_level = [_binned_gap(accept(tau), statistic, tau, bins)[1] for tau in levels]
        maps.append(QCEMap(label=label, edges=scheme.edges, counts=scheme.counts,
                           values=np.mean(per_level, axis=0)))
    return maps


# ============================================================================
# Reliability curve
# ============================================================================

@dataclass(frozen=True)
class ReliabilityCurve:
    """Empirical coverage of predicted quantiles, shape (T, K)."""
    levels: np.ndarray
    coverage: np.ndarray

    def rows(self, dim: int) -> List[Tuple[float, float]]:
        return list(zip(self.levels.tolist(), self.coverage[:, dim].tolist()))

    def calibration_gap(self) -> float:
        """Mean |coverage(tau) - tau| over levels and dimensions."""
        return float(np.mean(np.abs(self.coverage - self.levels[:, None])))


def reliability_curve(dataset: CalibrationDataset, predictions: Optional[Distribution] = None,
                      levels: Optional[QuantileGrid] = None) -> ReliabilityCurve:
    """Fraction of ground truths with y <= quantile(prediction, tau), per level and dimension."""
    predictions = _resolve(dataset, predictions)
    levels = levels or QuantileGrid.default()
    coverage = np.empty((len(levels), dataset.k))
    for t, tau in enumerate(levels):
        for d in range(dataset.k):
            coverage[t, d] = np.mean(dataset.ground_truth[:, d] <= quantile(predictions, tau, d))
    return ReliabilityCurve(levels=levels.levels, coverage=coverage)

