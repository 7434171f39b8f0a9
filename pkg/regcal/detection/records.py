"""
RegCal - Detection Records
Detector outputs, ground-truth annotations and matching configuration
"""

import math
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

BOX_DIM = 4

# (x1, y1, x2, y2) -> (cx, cy, w, h)
CORNER_TO_CENTER = np.array([
    [0.5, 0.0, 0.5, 0.0],
    [0.0, 0.5, 0.0, 0.5],
    [-1.0, 0.0, 1.0, 0.0],
    [0.0, -1.0, 0.0, 1.0],
])

BoxFormat = Literal["center", "corner"]


def _finite(values: List[float], name: str) -> List[float]:
    if not all(math.isfinite(v) for v in values):
        raise ValueError(f"{name} contains non-finite values")
    return values


def corners_to_center(box: List[float]) -> List[float]:
    """Convert (x1, y1, x2, y2) to (cx, cy, w, h)."""
    return (CORNER_TO_CENTER @ np.asarray(box, dtype=float)).tolist()


def center_to_corners(box: List[float]) -> List[float]:
    """Convert (cx, cy, w, h) to (x1, y1, x2, y2)."""
    cx, cy, w, h = box
    return [cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2]


class DetectionRecord(BaseModel):
    """One probabilistic detection in (cx, cy, w, h) pixel coordinates."""
    image_id: str
    category: str
    box_mean: List[float] = Field(min_length=BOX_DIM, max_length=BOX_DIM)
    box_var: List[float] = Field(min_length=BOX_DIM, max_length=BOX_DIM)
    box_cov: Optional[List[List[float]]] = None
    score: float = Field(ge=0.0, le=1.0)

    @field_validator("box_mean")
    @classmethod
    def _positive_size(cls, value: List[float]) -> List[float]:
        _finite(value, "box_mean")
        if value[2] <= 0 or value[3] <= 0:
            raise ValueError("box width and height must be positive")
        return value

    @field_validator("box_var")
    @classmethod
    def _positive_var(cls, value: List[float]) -> List[float]:
        _finite(value, "box_var")
        if min(value) <= 0:
            raise ValueError("box variances must be positive")
        return value

    @field_validator("box_cov")
    @classmethod
    def _square_cov(cls, value: Optional[List[List[float]]]) -> Optional[List[List[float]]]:
        if value is None:
            return value
        if len(value) != BOX_DIM or any(len(row) != BOX_DIM for row in value):
            raise ValueError("box_cov must be 4 x 4")
        for row in value:
            _finite(row, "box_cov")
        return value

    @model_validator(mode="after")
    def _cov_matches_var(self) -> "DetectionRecord":
        if self.box_cov is not None:
            diag = [self.box_cov[i][i] for i in range(BOX_DIM)]
            if not np.allclose(diag, self.box_var, rtol=1e-9, atol=0.0):
                raise ValueError("box_var must equal the diagonal of box_cov")
        return self

    @classmethod
    def from_corners(cls, image_id: str, category: str, box: List[float], box_var: List[float],
                     score: float, box_cov: Optional[List[List[float]]] = None) -> "DetectionRecord":
        """
        Build a record from corner coordinates and their (co)variances.

        The covariance is propagated through the linear corner-to-center map; with
        only variances given, the diagonal of the propagated covariance is kept.
        """
        cov = np.asarray(box_cov, dtype=float) if box_cov is not None else np.diag(box_var)
        center_cov = CORNER_TO_CENTER @ cov @ CORNER_TO_CENTER.T
        return cls(
            image_id=image_id,
            category=category,
            box_mean=corners_to_center(box),
            box_var=np.diag(center_cov).tolist(),
            box_cov=center_cov.tolist() if box_cov is not None else None,
            score=score,
        )


class GroundTruthRecord(BaseModel):
    """One annotated object in (cx, cy, w, h) pixel coordinates."""
    image_id: str
    category: str
    box: List[float] = Field(min_length=BOX_DIM, max_length=BOX_DIM)

    @field_validator("box")
    @classmethod
    def _positive_size(cls, value: List[float]) -> List[float]:
        _finite(value, "box")
        if value[2] <= 0 or value[3] <= 0:
            raise ValueError("box width and height must be positive")
        return value

    @classmethod
    def from_corners(cls, image_id: str, category: str, box: List[float]) -> "GroundTruthRecord":
        return cls(image_id=image_id, category=category, box=corners_to_center(box))


class MatchConfig(BaseModel):
    """Detection-to-annotation matching protocol."""
    iou_threshold: float = Field(default=0.5, gt=0.0, le=1.0)
    category_strict: bool = True
    split: Literal["none", "half"] = "none"
