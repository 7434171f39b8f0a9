"""
RegCal - Metrics
Miscalibration measures for probabilistic regression
"""

from .binning import BinningScheme, QuantileGrid, equal_frequency_bins
from .multivariate import chi2_quantile, nees, sgv
from .regression import (
    QCEMap,
    ReliabilityCurve,
    ence,
    mean_pinball,
    mean_qce,
    nll,
    nll_per_dim,
    pinball,
    qce,
    qce_map,
    reliability_curve,
    uce,
)
from .report import METRIC_NAMES, EvalConfig, curves, evaluate, parse_metric_list

__all__ = [
    "BinningScheme",
    "QuantileGrid",
    "equal_frequency_bins",
    "nees",
    "sgv",
    "chi2_quantile",
    "nll",
    "nll_per_dim",
    "pinball",
    "mean_pinball",
    "uce",
    "ence",
    "qce",
    "mean_qce",
    "qce_map",
    "QCEMap",
    "reliability_curve",
    "ReliabilityCurve",
    "EvalConfig",
    "METRIC_NAMES",
    "evaluate",
    "curves",
    "parse_metric_list",
]
