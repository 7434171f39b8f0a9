"""
RegCal - Detection Matching
IoU-based greedy assignment of detections to ground truth and image-level splits
"""

import hashlib
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core import CalibrationDataset, GaussianPrediction
from ..errors import DataError, RegCalError
from .records import BOX_DIM, DetectionRecord, GroundTruthRecord, MatchConfig, center_to_corners

logger = logging.getLogger(__name__)


def iou(box_a: Sequence[float], box_b: Sequence[float]) -> float:
    """
    Intersection over union of two (cx, cy, w, h) boxes.

    Args:
        box_a: first box
        box_b: second box

    Returns:
        IoU in [0, 1]
    """
    if box_a[2] <= 0 or box_a[3] <= 0 or box_b[2] <= 0 or box_b[3] <= 0:
        raise DataError("degenerate box with non-positive width or height")
    ax1, ay1, ax2, ay2 = center_to_corners(box_a)
    bx1, by1, bx2, by2 = center_to_corners(box_b)

    inter_w = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    inter_h = max(0.0, min(ay2, by2) - max(ay1, by1))
    intersection = inter_w * inter_h
    union = box_a[2] * box_a[3] + box_b[2] * box_b[3] - intersection
    return min(1.0, intersection / union) if union > 0 else 0.0


@dataclass
class MatchReport:
    """Counts of the matching run."""
    matched: int = 0
    unmatched_detections: int = 0
    unmatched_ground_truths: int = 0
    images: int = 0
    per_category: Dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "matched": self.matched,
            "unmatched_detections": self.unmatched_detections,
            "unmatched_ground_truths": self.unmatched_ground_truths,
            "images": self.images,
            "per_category": dict(sorted(self.per_category.items())),
        }


def _check_duplicates(ground_truths: List[GroundTruthRecord]) -> None:
    seen = set()
    for gt in ground_truths:
        key = (gt.image_id, tuple(gt.box))
        if key in seen:
            raise DataError(f"duplicate ground truth box {list(key[1])} in image {gt.image_id!r}")
        seen.add(key)


def _match_group(detections: List[DetectionRecord], ground_truths: List[GroundTruthRecord],
                 threshold: float) -> List[Tuple[DetectionRecord, GroundTruthRecord]]:
    """Greedy matching within one image (and category)."""
    order = sorted(detections, key=lambda det: (-det.score, det.image_id, tuple(det.box_mean)))
    remaining = sorted(ground_truths, key=lambda gt: tuple(gt.box))
    used = [False] * len(remaining)
    pairs = []
    for det in order:
        best, best_iou = -1, threshold
        for j, gt in enumerate(remaining):
            if used[j]:
                continue
            overlap = iou(det.box_mean, gt.box)
            # strict > keeps the lexicographically first box among ties
            if overlap > best_iou or (best < 0 and overlap >= threshold):
                best, best_iou = j, overlap
        if best >= 0:
            used[best] = True
            pairs.append((det, remaining[best]))
    return pairs


def match(detections: List[DetectionRecord], ground_truths: List[GroundTruthRecord],
          config: Optional[MatchConfig] = None) -> Tuple[CalibrationDataset, MatchReport]:
    """
    Pair detections with ground truths per image (and category when strict).

    Detections are visited in descending score order, each ground truth is used at
    most once and pairs need IoU >= threshold. Pairs are emitted in sorted image
    order.

    Returns:
        (CalibrationDataset with K=4 box targets grouped by image_id, MatchReport)
    """
    config = config or MatchConfig()
    _check_duplicates(ground_truths)

    def key(record) -> Tuple[str, str]:
        return (record.image_id, record.category if config.category_strict else "")

    det_groups: Dict[Tuple[str, str], List[DetectionRecord]] = defaultdict(list)
    gt_groups: Dict[Tuple[str, str], List[GroundTruthRecord]] = defaultdict(list)
    for det in detections:
        det_groups[key(det)].append(det)
    for gt in ground_truths:
        gt_groups[key(gt)].append(gt)

    report = MatchReport(images=len({r.image_id for r in list(detections) + list(ground_truths)}))
    pairs: List[Tuple[DetectionRecord, GroundTruthRecord]] = []
    for group in sorted(set(det_groups) | set(gt_groups)):
        matched = _match_group(det_groups.get(group, []), gt_groups.get(group, []),
                               config.iou_threshold)
        pairs.extend(matched)
        report.unmatched_detections += len(det_groups.get(group, [])) - len(matched)
        report.unmatched_ground_truths += len(gt_groups.get(group, [])) - len(matched)
        for det, _ in matched:
            report.per_category[det.category] = report.per_category.get(det.category, 0) + 1
    report.matched = len(pairs)

    logger.info(
        "Matched %d pairs (%d unmatched detections, %d unmatched ground truths) at IoU %.2f",
        report.matched, report.unmatched_detections, report.unmatched_ground_truths,
        config.iou_threshold,
    )
    return pairs_to_dataset(pairs), report


def pairs_to_dataset(pairs: List[Tuple[DetectionRecord, GroundTruthRecord]]) -> CalibrationDataset:
    """Stack matched pairs; full covariances are used when any detection carries one."""
    n = len(pairs)
    mean = np.array([det.box_mean for det, _ in pairs], dtype=float).reshape(n, BOX_DIM)
    gt = np.array([truth.box for _, truth in pairs], dtype=float).reshape(n, BOX_DIM)
    groups = np.array([det.image_id for det, _ in pairs], dtype=object)

    if any(det.box_cov is not None for det, _ in pairs):
        cov = np.stack([
            np.asarray(det.box_cov) if det.box_cov is not None else np.diag(det.box_var)
            for det, _ in pairs
        ])
        try:
            prediction = GaussianPrediction(mean=mean, cov=cov)
        except RegCalError as exc:
            raise DataError(f"invalid detection box_cov: {exc}") from None
    else:
        var = np.array([det.box_var for det, _ in pairs], dtype=float).reshape(n, BOX_DIM)
        prediction = GaussianPrediction(mean=mean, var=var)
    return CalibrationDataset(prediction=prediction, ground_truth=gt, groups=groups)


def _split_key(seed: int, image_id: str) -> str:
    return hashlib.sha256(f"{seed}:{image_id}".encode("utf-8")).hexdigest()


def half_split(dataset: CalibrationDataset, seed: int = 0) -> Tuple[CalibrationDataset, CalibrationDataset]:
    """
    Split by hashed image id: the first half of the images (in hash order) trains,
    the rest evaluates. No image spans both halves; input order does not matter.

    Samples without group keys are treated as one image each.
    """
    dataset.require_nonempty(2)
    groups = dataset.groups if dataset.groups is not None else np.array(
        [str(i) for i in range(dataset.n)], dtype=object)
    images = sorted({str(g) for g in groups}, key=lambda image: _split_key(seed, image))
    if len(images) < 2:
        raise DataError("half split needs samples from at least two images")

    train_images = set(images[:(len(images) + 1) // 2])
    in_train = np.array([str(g) in train_images for g in groups])
    train, held_out = np.flatnonzero(in_train), np.flatnonzero(~in_train)
    logger.info("Half split: %d train / %d eval samples over %d images",
                train.size, held_out.size, len(images))
    return dataset.subset(train), dataset.subset(held_out)
