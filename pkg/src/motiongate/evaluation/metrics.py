"""IoU, greedy PASCAL-style matching, average precision."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

import numpy as np

from ..core import Detection, NormalizedBox

ALL_POINT = "all-point"
ELEVEN_POINT = "11-point"


@dataclass(frozen=True)
class GroundTruthBox:
    box: NormalizedBox
    class_id: int = 1
    frame_index: int = -1


def iou(a: NormalizedBox, b: NormalizedBox) -> float:
    iw = min(a.right, b.right) - max(a.left, b.left)
    ih = min(a.bottom, b.bottom) - max(a.top, b.top)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def average_precision(recall: np.ndarray, precision: np.ndarray, interpolation: str = ALL_POINT) -> float:
    """Area under the interpolated precision/recall curve.

    ``all-point`` integrates the monotone precision envelope over every recall
    step; ``11-point`` averages the envelope at recall 0, 0.1, ..., 1.
    """
    recall = np.asarray(recall, dtype=np.float64)
    precision = np.asarray(precision, dtype=np.float64)
    if interpolation == ELEVEN_POINT:
        ap = 0.0
        for t in np.linspace(0.0, 1.0, 11):
            above = precision[recall >= t - 1e-12]
            ap += (above.max() if above.size else 0.0) / 11.0
        return float(ap)
    if interpolation != ALL_POINT:
        raise ValueError(f"unknown interpolation {interpolation!r}")

    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


@dataclass
class ClassCurve:
    class_id: int
    num_gt: int
    tp: np.ndarray
    scores: np.ndarray
    ap: float | None

    @property
    def recall(self) -> np.ndarray:
        return np.cumsum(self.tp) / max(self.num_gt, 1)

    @property
    def precision(self) -> np.ndarray:
        hits = np.cumsum(self.tp)
        return hits / np.arange(1, len(self.tp) + 1)


@dataclass
class APResult:
    per_class: dict[int, float | None]
    map: float | None
    curves: dict[int, ClassCurve] = field(default_factory=dict, repr=False)


def match_class(
    detections: Mapping[Hashable, Sequence[Detection]],
    ground_truth: Mapping[Hashable, Sequence[GroundTruthBox]],
    class_id: int,
    iou_threshold: float = 0.5,
) -> tuple[np.ndarray, np.ndarray, int]:
    """TP flags (in descending score order), the sorted scores, and the GT count.

    Each detection claims the still-unmatched box of highest IoU in its own
    frame, provided that IoU reaches the threshold; equal scores keep input
    order.
    """
    gts = {k: [g.box for g in v if g.class_id == class_id] for k, v in ground_truth.items()}
    num_gt = sum(len(v) for v in gts.values())
    ranked = []
    for key, frame_dets in detections.items():
        for d in frame_dets:
            if d.class_id == class_id:
                ranked.append((d.score, len(ranked), key, d.box))
    ranked.sort(key=lambda r: (-r[0], r[1]))

    used = defaultdict(set)
    tp = np.zeros(len(ranked))
    for i, (_, _, key, box) in enumerate(ranked):
        best, best_iou = None, iou_threshold
        for j, gt in enumerate(gts.get(key, ())):
            if j in used[key]:
                continue
            o = iou(box, gt)
            if o >= best_iou and (best is None or o > best_iou):
                best, best_iou = j, o
        if best is not None:
            used[key].add(best)
            tp[i] = 1.0
    return tp, np.array([r[0] for r in ranked]), num_gt


def match_and_score(
    detections: Mapping[Hashable, Sequence[Detection]],
    ground_truth: Mapping[Hashable, Sequence[GroundTruthBox]],
    iou_threshold: float = 0.5,
    interpolation: str = ALL_POINT,
    classes: Sequence[int] | None = None,
) -> APResult:
    """Per-class AP and their mean over classes that have ground truth.

    Both mappings are keyed by frame (any hashable, e.g. ``(sequence, index)``
    so several videos pool into one ranked list).  Detections in frames that
    have no ground-truth entry count as false positives, so callers should
    drop frames outside the evaluated range first.  A class without ground
    truth gets ``None`` and is left out of the mean.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold must lie in (0, 1), got {iou_threshold}")
    if classes is None:
        classes = sorted({g.class_id for v in ground_truth.values() for g in v}
                         | {d.class_id for v in detections.values() for d in v})
    per_class, curves = {}, {}
    for c in classes:
        tp, scores, num_gt = match_class(detections, ground_truth, c, iou_threshold)
        ap = None
        if num_gt:
            curve = ClassCurve(c, num_gt, tp, scores, None)
            ap = average_precision(curve.recall, curve.precision, interpolation) if len(tp) else 0.0
            curve.ap = ap
            curves[c] = curve
        per_class[c] = ap
    defined = [v for v in per_class.values() if v is not None]
    return APResult(per_class, float(np.mean(defined)) if defined else None, curves)
