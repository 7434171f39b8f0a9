"""
RegCal - Variance Scaling
Global per-dimension rescaling of Gaussian variances fitted by NLL minimisation
"""

import logging
import warnings
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np
from scipy.optimize import minimize_scalar

from ..core import CalibrationDataset, GaussianPrediction
from ..errors import DataError, NotFittedError

logger = logging.getLogger(__name__)

MIN_WEIGHT = 1e-8
FIT_METHODS = ("closed_form", "numeric")


@dataclass(frozen=True)
class VarianceScaler:
    """One positive variance weight w per output dimension."""
    w: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.w, dtype=float))
        if w.ndim != 1 or not np.all(w > 0) or not np.all(np.isfinite(w)):
            raise DataError("variance weights must be finite and positive")
        object.__setattr__(self, "w", w)

    @property
    def k(self) -> int:
        return self.w.size

    def to_payload(self) -> Dict[str, Any]:
        return {"w": self.w.tolist()}

    @classmethod
    def from_payload(cls, payload: Dict[str, Any]) -> "VarianceScaler":
        return cls(w=np.asarray(payload["w"], dtype=float))


def _nll_minimiser(z_sq: np.ndarray) -> float:
    # NLL of N(0, w) up to constants, parameterised over t = log w
    mean_sq = float(np.mean(z_sq))
    result = minimize_scalar(
        lambda t: 0.5 * (t + mean_sq * np.exp(-t)),
        bounds=(np.log(MIN_WEIGHT), 30.0),
        method="bounded",
        options={"xatol": 1e-10},
    )
    return float(np.exp(result.x))


def variance_scaling_fit(dataset: CalibrationDataset, method: str = "closed_form") -> VarianceScaler:
    """
    Fit w per dimension minimising the mean Gaussian NLL of N(mu, w * sigma^2).

    Args:
        dataset: training pairs (full covariances contribute their marginal variances)
        method: "closed_form" (w = mean z^2) or "numeric" (bounded scalar search)

    Returns:
        Fitted VarianceScaler
    """
    if method not in FIT_METHODS:
        raise DataError(f"unknown variance scaling method {method!r}")
    dataset.require_nonempty(1)

    z_sq = dataset.z_scores ** 2
    if method == "closed_form":
        w = z_sq.mean(axis=0)
    else:
        w = np.array([_nll_minimiser(z_sq[:, d]) for d in range(dataset.k)])

    degenerate = w < MIN_WEIGHT
    if np.any(degenerate):
        dims = np.flatnonzero(degenerate).tolist()
        message = f"variance weight below {MIN_WEIGHT} in dimension(s) {dims}; clamped"
        logger.warning(message)
        warnings.warn(message, RuntimeWarning, stacklevel=2)
        w = np.maximum(w, MIN_WEIGHT)

    logger.info("Variance scaling (%s): w = %s", method, np.array2string(w, precision=4))
    return VarianceScaler(w=w)


def variance_scaling_apply(scaler: VarianceScaler, prediction: GaussianPrediction) -> GaussianPrediction:
    """
    Multiply variances by w, keeping the mean.

    Full covariances are rescaled as diag(sqrt w) Sigma diag(sqrt w), which multiplies
    every marginal variance by its w and keeps the correlations.
    """
    if scaler is None:
        raise NotFittedError("variance scaler is not fitted")
    if prediction.k != scaler.k:
        raise DataError(f"scaler has K={scaler.k}, prediction has K={prediction.k}")
    if not prediction.is_full:
        return GaussianPrediction(mean=prediction.mean, var=prediction.var * scaler.w)
    root = np.sqrt(scaler.w)
    cov = prediction.cov * root[None, :, None] * root[None, None, :]
    return GaussianPrediction(mean=prediction.mean, cov=cov)
