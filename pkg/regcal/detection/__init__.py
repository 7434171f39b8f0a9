"""
RegCal - Detection I/O
Detection ingest, IoU matching and leakage-free train/eval splitting
"""

from .jsonl import (
    read_dataset,
    read_detections,
    read_ground_truths,
    read_inputs,
    read_outputs,
    write_dataset,
    write_detections,
    write_ground_truths,
    write_outputs,
)
from .matching import MatchReport, half_split, iou, match, pairs_to_dataset
from .records import (
    DetectionRecord,
    GroundTruthRecord,
    MatchConfig,
    center_to_corners,
    corners_to_center,
)

__all__ = [
    # Records
    "DetectionRecord",
    "GroundTruthRecord",
    "MatchConfig",
    "corners_to_center",
    "center_to_corners",
    # Matching
    "iou",
    "match",
    "MatchReport",
    "pairs_to_dataset",
    "half_split",
    # JSON-lines
    "read_detections",
    "read_ground_truths",
    "write_detections",
    "write_ground_truths",
    "read_dataset",
    "read_inputs",
    "write_dataset",
    "read_outputs",
    "write_outputs",
]
