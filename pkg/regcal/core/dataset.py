"""
RegCal - Calibration Dataset
Matched (prediction, ground truth) pairs in K dimensions
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import DataError
from .distributions import GaussianPrediction


@dataclass(frozen=True)
class CalibrationDataset:
    """
    Gaussian predictions aligned 1:1 with ground-truth vectors.

    Attributes:
        prediction: batch of N Gaussian predictions over K dimensions
        ground_truth: (N, K) observed targets
        groups: optional (N,) group keys (image ids) used for leakage-free splits
    """
    prediction: GaussianPrediction
    ground_truth: np.ndarray
    groups: Optional[np.ndarray] = None

    def __post_init__(self):
        gt = np.atleast_2d(np.asarray(self.ground_truth, dtype=float))
        if gt.shape != (self.prediction.n, self.prediction.k):
            raise DataError(
                f"ground truth shape {gt.shape} does not match predictions "
                f"({self.prediction.n}, {self.prediction.k})"
            )
        if not np.all(np.isfinite(gt)):
            raise DataError("non-finite ground truth")
        object.__setattr__(self, "ground_truth", gt)
        if self.groups is not None:
            groups = np.asarray(self.groups, dtype=object)
            if groups.shape != (gt.shape[0],):
                raise DataError("groups must hold one key per sample")
            object.__setattr__(self, "groups", groups)

    @property
    def n(self) -> int:
        return self.ground_truth.shape[0]

    @property
    def k(self) -> int:
        return self.ground_truth.shape[1]

    @property
    def residuals(self) -> np.ndarray:
        return self.ground_truth - self.prediction.mean

    @property
    def z_scores(self) -> np.ndarray:
        """Residuals normalised by the predicted marginal standard deviations."""
        return self.residuals / self.prediction.std

    def require_nonempty(self, minimum: int = 1) -> None:
        if self.n < minimum:
            raise DataError(f"dataset needs at least {minimum} samples, got {self.n}")

    def subset(self, index) -> "CalibrationDataset":
        index = np.atleast_1d(index)
        groups = None if self.groups is None else self.groups[index]
        return CalibrationDataset(
            prediction=self.prediction.subset(index),
            ground_truth=self.ground_truth[index],
            groups=groups,
        )
