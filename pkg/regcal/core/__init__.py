"""
RegCal - Core
Distribution value types, evaluation primitives and the linear algebra kernel
"""

from .dataset import CalibrationDataset
from .distributions import (
    CauchyPrediction,
    Distribution,
    GaussianPrediction,
    NonparametricDistribution,
    cdf,
    location,
    moments,
    log_density,
    log_density_dim,
    quantile,
    spread,
)
from .linalg import (
    cholesky,
    ldl_decompose,
    ldl_reconstruct,
    mahalanobis_sq,
    repair_spd,
)

__all__ = [
    # Value types
    "GaussianPrediction",
    "CauchyPrediction",
    "NonparametricDistribution",
    "Distribution",
    "CalibrationDataset",
    # Evaluation
    "cdf",
    "quantile",
    "log_density",
    "log_density_dim",
    "spread",
    "location",
    "moments",
    # Linear algebra
    "cholesky",
    "ldl_decompose",
    "ldl_reconstruct",
    "mahalanobis_sq",
    "repair_spd",
]
