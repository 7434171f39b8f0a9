"""
RegCal - Covariance Templates
Correlation templates for covariance estimation and LDL-based covariance rescaling
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from ..core import CalibrationDataset, GaussianPrediction, ldl_decompose, ldl_reconstruct, repair_spd
from ..errors import DataError

logger = logging.getLogger(__name__)

MIN_TEMPLATE_SAMPLES = 10
REPAIR_FLOOR = 1e-6


@dataclass(frozen=True)
class CorrelationTemplate:
    """
    Marginal correlation coefficients shared by all samples.

    Attributes:
        rho: (K, K) symmetric matrix, unit diagonal, entries in [-1, 1]
    """
    rho: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] < 2:
            raise DataError(f"correlation template must be K x K with K >= 2, got {rho.shape}")
        if not np.allclose(rho, rho.T, atol=1e-12):
            raise DataError("correlation template is not symmetric")
        if not np.allclose(np.diag(rho), 1.0):
            raise DataError("correlation template needs a unit diagonal")
        if np.abs(rho).max() > 1.0 + 1e-12:
            raise DataError("correlation coefficients must lie in [-1, 1]")
        object.__setattr__(self, "rho", rho)

    @property
    def k(self) -> int:
        return self.rho.shape[0]

    @property
    def repaired(self) -> np.ndarray:
        """Nearest SPD correlation matrix (eigenvalue clipping)."""
        return repair_spd(self.rho, REPAIR_FLOOR)

    def covariance(self, prediction: GaussianPrediction) -> np.ndarray:
        """Per-sample template covariance Sigma_ij = rho_ij sigma_i sigma_j, (N, K, K)."""
        if prediction.k != self.k:
            raise DataError(f"template has K={self.k}, prediction has K={prediction.k}")
        std = prediction.std
        return std[:, :, None] * self.repaired[None] * std[:, None, :]

    def to_payload(self) -> Dict[str, Any]:
        return {"rho": self.rho.tolist()}

    @classmethod
    def from_payload(cls, payload: Dict[str, Any]) -> "CorrelationTemplate":
        return cls(rho=np.asarray(payload["rho"], dtype=float))


def correlation_template(dataset: CalibrationDataset) -> CorrelationTemplate:
    """
    Pearson correlations of the normalised residuals (y - mu) / sigma.

    Args:
        dataset: K >= 2 dimensions and at least 10 samples

    Returns:
        CorrelationTemplate with a forced unit diagonal
    """
    if dataset.k < 2:
        raise DataError("a correlation template needs at least two dimensions")
    dataset.require_nonempty(MIN_TEMPLATE_SAMPLES)

    z = dataset.z_scores
    flat = np.flatnonzero(z.std(axis=0) == 0)
    if flat.size:
        raise DataError(f"residual column {int(flat[0])} has zero variance")

    rho = np.clip(np.corrcoef(z, rowvar=False), -1.0, 1.0)
    rho = 0.5 * (rho + rho.T)
    np.fill_diagonal(rho, 1.0)
    logger.info("Correlation template: %s", np.array2string(rho, precision=3))
    return CorrelationTemplate(rho=rho)


def rescale_ldl(unit_lower: np.ndarray, d: np.ndarray, w_lower: np.ndarray,
                w_diag: np.ndarray) -> np.ndarray:
    """
    Covariance from weighted LDL factors: L_hat = w_L * L off the diagonal (unit
    diagonal kept), D_hat = w_D * D, Sigma_hat = L_hat D_hat L_hat^T.

    Args:
        unit_lower: (..., K, K) unit lower triangular factors
        d: (..., K) positive diagonal of D
        w_lower: (..., K, K) weights; only the strictly lower entries are used
        w_diag: (..., K) positive weights

    Returns:
        (..., K, K) symmetric positive definite matrices
    """
    if np.any(np.asarray(w_diag) <= 0):
        raise DataError("diagonal weights must be positive")
    k = unit_lower.shape[-1]
    scaled = np.tril(unit_lower * w_lower, k=-1) + np.eye(k)
    return ldl_reconstruct(scaled, d * w_diag)


def base_factors(prediction: GaussianPrediction,
                 template: Optional[CorrelationTemplate] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    LDL factors of the covariance to be rescaled.

    Estimation mode (template given) builds the template covariance; recalibration
    mode uses the prediction's own covariance.
    """
    cov = template.covariance(prediction) if template is not None else prediction.covariance()
    return ldl_decompose(cov)
