"""
RegCal - JSON-Lines I/O
Readers and writers for detections, ground truths, matched datasets and calibrated outputs
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Tuple, Type, TypeVar, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator

from ..core import (
    CalibrationDataset,
    CauchyPrediction,
    Distribution,
    GaussianPrediction,
    NonparametricDistribution,
)
from ..errors import DataError
from .records import BoxFormat, DetectionRecord, GroundTruthRecord

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
Record = TypeVar("Record", bound=BaseModel)


# ============================================================================
# Line-level parsing
# ============================================================================

def iter_jsonl(path: PathLike) -> Iterator[Tuple[int, Dict[str, Any]]]:
    """Yield (1-based line number, object) for each non-blank line."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"input file not found: {path}")
    with path.open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"invalid JSON ({exc.msg})", line=line_no) from None
            if not isinstance(obj, dict):
                raise DataError("expected a JSON object", line=line_no)
            yield line_no, obj


def _parse(model: Type[Record], obj: Dict[str, Any], line_no: int) -> Record:
    try:
        return model.model_validate(obj)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(part) for part in first["loc"]) or "record"
        raise DataError(f"{where}: {first['msg']}", line=line_no) from None


def _dump_line(obj: Dict[str, Any]) -> str:
    return json.dumps(obj, allow_nan=False, separators=(",", ":"))


def write_jsonl(path: PathLike, objects: List[Dict[str, Any]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for obj in objects:
            handle.write(_dump_line(obj) + "\n")


# ============================================================================
# Detection records
# ============================================================================

class _CornerDetection(BaseModel):
    image_id: str
    category: str
    box_mean: List[float]
    box_var: List[float]
    box_cov: Optional[List[List[float]]] = None
    score: float


class _CornerGroundTruth(BaseModel):
    image_id: str
    category: str
    box: List[float]


def read_detections(path: PathLike, box_format: BoxFormat = "center") -> List[DetectionRecord]:
    """Parse detections; corner-format boxes are converted to (cx, cy, w, h)."""
    records = []
    for line_no, obj in iter_jsonl(path):
        if box_format == "corner":
            raw = _parse(_CornerDetection, obj, line_no)
            try:
                records.append(DetectionRecord.from_corners(
                    raw.image_id, raw.category, raw.box_mean, raw.box_var, raw.score, raw.box_cov))
            except ValidationError as exc:
                raise DataError(exc.errors()[0]["msg"], line=line_no) from None
        else:
            records.append(_parse(DetectionRecord, obj, line_no))
    return records


def read_ground_truths(path: PathLike, box_format: BoxFormat = "center") -> List[GroundTruthRecord]:
    records = []
    for line_no, obj in iter_jsonl(path):
        if box_format == "corner":
            raw = _parse(_CornerGroundTruth, obj, line_no)
            try:
                records.append(GroundTruthRecord.from_corners(raw.image_id, raw.category, raw.box))
            except ValidationError as exc:
                raise DataError(exc.errors()[0]["msg"], line=line_no) from None
        else:
            records.append(_parse(GroundTruthRecord, obj, line_no))
    return records


def write_detections(path: PathLike, records: List[DetectionRecord]) -> None:
    write_jsonl(path, [r.model_dump(exclude_none=True) for r in records])


def write_ground_truths(path: PathLike, records: List[GroundTruthRecord]) -> None:
    write_jsonl(path, [r.model_dump() for r in records])


# ============================================================================
# Matched datasets
# ============================================================================

class SampleRecord(BaseModel):
    """One (prediction, ground truth) line of a matched dataset."""
    mean: List[float] = Field(min_length=1)
    var: Optional[List[float]] = None
    cov: Optional[List[List[float]]] = None
    gt: Optional[List[float]] = None
    image_id: Optional[str] = None

    @model_validator(mode="after")
    def _shapes(self) -> "SampleRecord":
        k = len(self.mean)
        if (self.var is None) == (self.cov is None):
            raise ValueError("exactly one of var or cov is required")
        if self.var is not None and len(self.var) != k:
            raise ValueError(f"var has {len(self.var)} entries, mean has {k}")
        if self.cov is not None and (len(self.cov) != k or any(len(r) != k for r in self.cov)):
            raise ValueError(f"cov must be {k} x {k}")
        if self.gt is not None and len(self.gt) != k:
            raise ValueError(f"gt has {len(self.gt)} entries, mean has {k}")
        values = list(self.mean) + list(self.var or []) + list(self.gt or [])
        values += [v for row in (self.cov or []) for v in row]
        if not all(math.isfinite(v) for v in values):
            raise ValueError("non-finite number")
        return self


def _read_samples(path: PathLike) -> List[Tuple[int, SampleRecord]]:
    samples = [(line_no, _parse(SampleRecord, obj, line_no)) for line_no, obj in iter_jsonl(path)]
    if samples:
        k = len(samples[0][1].mean)
        for line_no, sample in samples:
            if len(sample.mean) != k:
                raise DataError(f"dimension {len(sample.mean)} differs from K={k}", line=line_no)
    return samples


def _prediction(samples: List[Tuple[int, SampleRecord]]) -> GaussianPrediction:
    mean = np.array([s.mean for _, s in samples], dtype=float)
    try:
        if any(s.cov is not None for _, s in samples):
            cov = np.stack([np.asarray(s.cov) if s.cov is not None else np.diag(s.var)
                            for _, s in samples])
            return GaussianPrediction(mean=mean, cov=cov)
        return GaussianPrediction(mean=mean, var=np.array([s.var for _, s in samples], dtype=float))
    except ArithmeticError as exc:
        raise DataError(str(exc)) from exc


def _groups(samples: List[Tuple[int, SampleRecord]]) -> Optional[np.ndarray]:
    if all(s.image_id is not None for _, s in samples):
        return np.array([s.image_id for _, s in samples], dtype=object)
    return None


def read_inputs(path: PathLike) -> Tuple[GaussianPrediction, Optional[np.ndarray], Optional[np.ndarray]]:
    """
    Gaussian predictions of a dataset file where ground truths are optional.

    Returns:
        (predictions, (N, K) ground truths or None, (N,) image ids or None)
    """
    samples = _read_samples(path)
    if not samples:
        raise DataError(f"no samples in {path}")
    ground_truth = None
    if all(s.gt is not None for _, s in samples):
        ground_truth = np.array([s.gt for _, s in samples], dtype=float)
    return _prediction(samples), ground_truth, _groups(samples)


def read_dataset(path: PathLike) -> CalibrationDataset:
    """Matched dataset with mandatory ground truths."""
    samples = _read_samples(path)
    if not samples:
        raise DataError(f"no samples in {path}")
    for line_no, sample in samples:
        if sample.gt is None:
            raise DataError("missing ground truth 'gt'", line=line_no)
    return CalibrationDataset(
        prediction=_prediction(samples),
        ground_truth=np.array([s.gt for _, s in samples], dtype=float),
        groups=_groups(samples),
    )


def write_dataset(path: PathLike, dataset: CalibrationDataset) -> None:
    write_jsonl(path, [
        _distribution_line(dataset.prediction, i, dataset.ground_truth[i],
                           None if dataset.groups is None else str(dataset.groups[i]))
        for i in range(dataset.n)
    ])


# ============================================================================
# Calibrated outputs
# ============================================================================

def _distribution_line(dist: Distribution, i: int, gt: Optional[np.ndarray],
                       image_id: Optional[str]) -> Dict[str, Any]:
    if isinstance(dist, GaussianPrediction):
        line: Dict[str, Any] = {"mean": dist.mean[i].tolist()}
        if dist.is_full:
            line["cov"] = dist.cov[i].tolist()
        else:
            line["var"] = dist.var[i].tolist()
    elif isinstance(dist, CauchyPrediction):
        line = {"loc": dist.loc[i].tolist(), "scale": dist.scale[i].tolist()}
    else:
        line = {"support": dist.support[i].T.tolist(), "cdf": dist.cdf[i].T.tolist()}
    if gt is not None:
        line["gt"] = np.asarray(gt).tolist()
    if image_id is not None:
        line["image_id"] = image_id
    return line


def write_outputs(path: PathLike, dist: Distribution, ground_truth: Optional[np.ndarray] = None,
                  groups: Optional[np.ndarray] = None) -> None:
    """One line per sample, in input order; ground truths are carried when given."""
    write_jsonl(path, [
        _distribution_line(dist, i,
                           None if ground_truth is None else ground_truth[i],
                           None if groups is None else str(groups[i]))
        for i in range(dist.n)
    ])


def read_outputs(path: PathLike) -> Tuple[Distribution, Optional[np.ndarray]]:
    """
    Read calibrated outputs of any distribution type.

    Returns:
        (distribution batch, (N, K) ground truths or None when absent)
    """
    lines = list(iter_jsonl(path))
    if not lines:
        raise DataError(f"no samples in {path}")
    first = lines[0][1]
    try:
        if "support" in first:
            dist: Distribution = NonparametricDistribution(
                support=np.stack([np.asarray(obj["support"], dtype=float).T for _, obj in lines]),
                cdf=np.stack([np.asarray(obj["cdf"], dtype=float).T for _, obj in lines]),
            )
        elif "loc" in first:
            dist = CauchyPrediction(
                loc=np.array([obj["loc"] for _, obj in lines], dtype=float),
                scale=np.array([obj["scale"] for _, obj in lines], dtype=float),
            )
        else:
            dist = _prediction([(n, _parse(SampleRecord, obj, n)) for n, obj in lines])
    except DataError:
        raise
    except (KeyError, ValueError) as exc:
        raise DataError(f"malformed output file {path}: {exc}") from exc

    if all("gt" in obj for _, obj in lines):
        return dist, np.array([obj["gt"] for _, obj in lines], dtype=float)
    return dist, None
