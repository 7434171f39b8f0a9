"""
RegCal - Isotonic Regression Recalibration
Marginal CDF recalibration with a pool-adjacent-violators fit per dimension
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np
from scipy.stats import rankdata
from sklearn.isotonic import IsotonicRegression, isotonic_regression

from ..config import CDF_EPS, GRID_TAIL, get_settings
from ..core import CalibrationDataset, Distribution, NonparametricDistribution, cdf, quantile
from ..errors import DataError, NotFittedError

logger = logging.getLogger(__name__)


def pool_adjacent_violators(values: np.ndarray, weights: Optional[np.ndarray] = None) -> np.ndarray:
    """
    L2-optimal nondecreasing fit of a sequence (already ordered by its inputs).

    Args:
        values: sequence to monotonise
        weights: optional positive sample weights

    Returns:
        Nondecreasing array of the same length
    """
    values = np.asarray(values, dtype=float)
    return isotonic_regression(values, sample_weight=weights, increasing=True)


@dataclass(frozen=True)
class IsotonicCalibrator:
    """
    Per-dimension monotone maps from predicted CDF positions to empirical frequencies.

    Attributes:
        breakpoints: per dimension, nondecreasing p_1 <= ... <= p_B in [0, 1]
        values: per dimension, nondecreasing g_1 <= ... <= g_B in [0, 1]
    """
    breakpoints: List[np.ndarray]
    values: List[np.ndarray]

    def __post_init__(self):
        if len(self.breakpoints) != len(self.values) or not self.breakpoints:
            raise DataError("isotonic calibrator needs matching per-dimension tables")
        for d, (p, g) in enumerate(zip(self.breakpoints, self.values)):
            if p.shape != g.shape or p.size == 0:
                raise DataError(f"dimension {d}: breakpoint/value tables differ in size")
            if np.any(np.diff(p) < 0) or np.any(np.diff(g) < 0):
                raise DataError(f"dimension {d}: isotonic map is not monotone")
            if p.min() < 0 or p.max() > 1 or g.min() < 0 or g.max() > 1:
                raise DataError(f"dimension {d}: isotonic map leaves [0, 1]")

    @property
    def k(self) -> int:
        return len(self.breakpoints)

    def transform(self, p: np.ndarray, dim: int) -> np.ndarray:
        """Evaluate the fitted map of one dimension, clamped to [eps, 1 - eps]."""
        mapped = np.interp(p, self.breakpoints[dim], self.values[dim])
        return np.clip(mapped, CDF_EPS, 1.0 - CDF_EPS)

    def to_payload(self) -> Dict[str, Any]:
        return {
            "breakpoints": [p.tolist() for p in self.breakpoints],
            "values": [g.tolist() for g in self.values],
        }

    @classmethod
    def from_payload(cls, payload: Dict[str, Any]) -> "IsotonicCalibrator":
        return cls(
            breakpoints=[np.asarray(p, dtype=float) for p in payload["breakpoints"]],
            values=[np.asarray(g, dtype=float) for g in payload["values"]],
        )


def isotonic_fit(dataset: CalibrationDataset) -> IsotonicCalibrator:
    """
    Fit one isotonic map per dimension.

    Inputs are the predicted CDF positions p_i = cdf(prediction_i, y_i); targets are
    their empirical CDF ranks / N with mid-ranks for ties.

    Args:
        dataset: training pairs, at least two samples

    Returns:
        Fitted IsotonicCalibrator
    """
    if dataset.n == 0:
        raise DataError("cannot fit isotonic regression on an empty dataset")
    dataset.require_nonempty(2)

    breakpoints, values = [], []
    for d in range(dataset.k):
        p = cdf(dataset.prediction, dataset.ground_truth[:, d], d)
        targets = rankdata(p, method="average") / dataset.n
        model = IsotonicRegression(y_min=0.0, y_max=1.0, increasing=True, out_of_bounds="clip")
        model.fit(p, targets)
        breakpoints.append(np.asarray(model.X_thresholds_, dtype=float))
        values.append(np.asarray(model.y_thresholds_, dtype=float))
        logger.debug("Isotonic dim %d: %d breakpoints", d, breakpoints[-1].size)

    logger.info("Fitted isotonic regression on %d samples, K=%d", dataset.n, dataset.k)
    return IsotonicCalibrator(breakpoints=breakpoints, values=values)


def output_grid(prediction: Distribution, dim: int, size: int) -> np.ndarray:
    """(N, G) grid spanning the GRID_TAIL and 1 - GRID_TAIL quantiles of a prediction."""
    levels = np.linspace(GRID_TAIL, 1.0 - GRID_TAIL, size)
    return quantile(prediction, np.broadcast_to(levels, (prediction.n, size)), dim)


def isotonic_apply(calibrator: IsotonicCalibrator, prediction: Distribution,
                   grid_size: Optional[int] = None) -> NonparametricDistribution:
    """
    Recalibrated CDF g(cdf(prediction, y)) on a per-sample grid.

    Args:
        calibrator: fitted isotonic maps
        prediction: uncalibrated predictions with K matching the calibrator
        grid_size: grid points G (defaults to the configured 512)

    Returns:
        NonparametricDistribution with monotone CDF values
    """
    if calibrator is None:
        raise NotFittedError("isotonic calibrator is not fitted")
    if prediction.k != calibrator.k:
        raise DataError(f"calibrator has K={calibrator.k}, prediction has K={prediction.k}")
    for d in range(calibrator.k):
        if calibrator.values[d][-1] <= calibrator.values[d][0]:
            raise DataError(f"dimension {d}: constant isotonic map cannot define a CDF")

    size = grid_size or get_settings().grid_size
    support = np.empty((prediction.n, size, prediction.k))
    values = np.empty_like(support)
    for d in range(prediction.k):
        support[:, :, d] = output_grid(prediction, d, size)
        values[:, :, d] = calibrator.transform(cdf(prediction, support[:, :, d], d), d)
    return NonparametricDistribution(support=support, cdf=values)
