"""
RegCal - Evaluation Report
Collects every applicable metric into a flat, diffable dictionary
"""

import logging
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator

from ..core import CalibrationDataset, CauchyPrediction, Distribution, GaussianPrediction
from ..errors import DataError
from .binning import DEFAULT_BINS, DEFAULT_LEVELS, QuantileGrid
from .regression import (
    QCEMap,
    ReliabilityCurve,
    ence,
    mean_pinball,
    mean_qce,
    nll,
    nll_per_dim,
    qce_map,
    reliability_curve,
    uce,
)

logger = logging.getLogger(__name__)

METRIC_NAMES = ("nll", "pinball", "qce", "uce", "ence")


class EvalConfig(BaseModel):
    """Evaluation protocol: bin count, quantile levels and metric selection."""
    bins: int = Field(default=DEFAULT_BINS, ge=1)
    levels: str = DEFAULT_LEVELS
    metrics: List[str] = Field(default_factory=lambda: list(METRIC_NAMES))

    @field_validator("metrics")
    @classmethod
    def _known_metrics(cls, value: List[str]) -> List[str]:
        unknown = [name for name in value if name not in METRIC_NAMES]
        if unknown:
            raise ValueError(f"unknown metric(s): {', '.join(unknown)}")
        return value

    @field_validator("levels")
    @classmethod
    def _valid_levels(cls, value: str) -> str:
        QuantileGrid.parse(value)
        return value

    @property
    def grid(self) -> QuantileGrid:
        return QuantileGrid.parse(self.levels)


def evaluate(dataset: CalibrationDataset, predictions: Optional[Distribution] = None,
             config: Optional[EvalConfig] = None) -> Dict[str, Any]:
    """
    Compute the configured metrics.

    Keys are "<metric>/<dim>" for per-dimension values, "<metric>/mean" for the
    unweighted mean over dimensions and "<metric>/mv" for joint (multivariate)
    values. "meta/..." keys record the protocol.

    Args:
        dataset: ground truths (and uncalibrated predictions)
        predictions: calibrated outputs; defaults to the dataset's own predictions
        config: evaluation protocol

    Returns:
        Flat report dictionary
    """
    config = config or EvalConfig()
    predictions = dataset.prediction if predictions is None else predictions
    grid = config.grid
    notes: List[str] = []
    report: Dict[str, Any] = {}

    def put(name: str, values: np.ndarray) -> None:
        for d, value in enumerate(np.atleast_1d(values)):
            report[f"{name}/{d}"] = float(value)
        report[f"{name}/mean"] = float(np.mean(values))

    multivariate = isinstance(predictions, GaussianPrediction) and dataset.k > 1

    if "nll" in config.metrics:
        put("nll", nll_per_dim(dataset, predictions))
        if dataset.k > 1:
            report["nll/mv"] = nll(dataset, predictions)
    if "pinball" in config.metrics:
        put("pinball", mean_pinball(dataset, predictions, grid, reduction="none"))
    if "qce" in config.metrics:
        put("qce", mean_qce(dataset, predictions, grid, config.bins, reduction="none"))
        if multivariate:
            report["qce/mv"] = mean_qce(dataset, predictions, grid, config.bins, multivariate=True)
    for name, metric in (("uce", uce), ("ence", ence)):
        if name not in config.metrics:
            continue
        if isinstance(predictions, CauchyPrediction):
            notes.append(f"{name} unavailable: the Cauchy distribution has no variance defined")
            continue
        put(name, metric(dataset, predictions, config.bins, reduction="none"))

    report["meta/n"] = dataset.n
    report["meta/k"] = dataset.k
    report["meta/bins"] = config.bins
    report["meta/levels"] = grid.levels.tolist()
    report["meta/binning"] = "equal_frequency"
    report["meta/empty_bins"] = "zero weight (uce, qce); skipped (ence)"
    report["meta/notes"] = notes
    for note in notes:
        logger.info(note)
    return report


def curves(dataset: CalibrationDataset, predictions: Optional[Distribution] = None,
           config: Optional[EvalConfig] = None) -> tuple:
    """Reliability curve and QCE maps used for the CSV plot data."""
    config = config or EvalConfig()
    predictions = dataset.prediction if predictions is None else predictions
    curve: ReliabilityCurve = reliability_curve(dataset, predictions, config.grid)
    maps: List[QCEMap] = qce_map(dataset, predictions, config.grid, config.bins)
    if isinstance(predictions, GaussianPrediction) and dataset.k > 1:
        maps += qce_map(dataset, predictions, config.grid, config.bins, multivariate=True)
    return curve, maps


def parse_metric_list(spec: str) -> List[str]:
    """Split a comma separated metric list, rejecting unknown names."""
    names = [name.strip() for name in spec.split(",") if name.strip()]
    unknown = [name for name in names if name not in METRIC_NAMES]
    if unknown:
        raise DataError(f"unknown metric name(s): {', '.join(unknown)}")
    return names
