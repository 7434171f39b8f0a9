"""
RegCal - Regression Recalibration
Post-hoc recalibration and calibration metrics for probabilistic regression
"""

from .config import Settings, get_settings
from .core import (
    CalibrationDataset,
    CauchyPrediction,
    GaussianPrediction,
    NonparametricDistribution,
)
from .errors import (
    DataError,
    NotFittedError,
    NumericalError,
    RegCalError,
    TrainingDivergedError,
)
from .methods import METHODS, apply_calibrator, fit_calibrator
from .metrics import EvalConfig, evaluate

__version__ = "0.1.0"

__all__ = [
    # Data
    "GaussianPrediction",
    "CauchyPrediction",
    "NonparametricDistribution",
    "CalibrationDataset",
    # Methods
    "METHODS",
    "fit_calibrator",
    "apply_calibrator",
    # Metrics
    "EvalConfig",
    "evaluate",
    # Errors
    "RegCalError",
    "DataError",
    "NumericalError",
    "NotFittedError",
    "TrainingDivergedError",
    # Settings
    "Settings",
    "get_settings",
]
