"""Run a detector over sequences and collect MAP, timings and gating statistics."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import statistics
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from ..core import Decision, Detection
from ..errors import PipelineError
from ..pipeline import STAGES, FrameResult
from .metrics import ALL_POINT, match_and_score

log = logging.getLogger(__name__)

TIMING_FIELDS = ("mean_frame_us", "median_frame_us", "stage_mean_us")


@dataclass
class FrameRecord:
    sequence: str
    index: int
    result: FrameResult
    evaluated: bool

    def trace_row(self) -> dict:
        r = self.result
        return {
            "sequence": self.sequence,
            "frame": self.index,
            "decision": r.decision.value,
            "motion_max": round(r.motion_max, 9),
            "detections": len(r.detections),
            "head_invoked": int(r.head_invoked),
            "total_us": round(r.total_us, 3),
        }


@dataclass
class EvalReport:
    map: float | None
    per_class_ap: dict[int, float | None]
    per_sequence_map: dict[str, float | None]
    mean_frame_us: float
    median_frame_us: float
    stage_mean_us: dict[str, float]
    head_invocation_fraction: float
    frames: int
    timed_frames: int
    moving_frames: int
    iou_threshold: float
    interpolation: str
    config: dict = field(default_factory=dict)
    config_hash: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_class_ap"] = {str(k): v for k, v in self.per_class_ap.items()}
        return d

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, **kwargs)

    def csv_row(self) -> dict:
        row = {
            "config_hash": self.config_hash,
            "map": "" if self.map is None else self.map,
            "mean_frame_us": self.mean_frame_us,
            "median_frame_us": self.median_frame_us,
            "head_invocation_fraction": self.head_invocation_fraction,
            "frames": self.frames,
            "moving_frames": self.moving_frames,
        }
        for stage in STAGES:
            row[f"{stage}_us"] = self.stage_mean_us.get(stage, 0.0)
        for key, value in sorted(_flatten(self.config).items()):
            row[f"cfg.{key}"] = value
        return row

    def without_timing(self) -> dict:
        d = self.to_dict()
        for key in TIMING_FIELDS:
            d.pop(key, None)
        return d


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = json.dumps(v) if isinstance(v, (list, tuple)) else v
    return out


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def csv_text(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    keys = list(dict.fromkeys(k for row in rows for k in row))
    writer = csv.DictWriter(buf, fieldnames=keys)
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def _keep(det: Detection, classes, ignore: np.ndarray | None) -> bool:
    if classes is not None and det.class_id not in classes:
        return False
    if ignore is not None:
        h, w = ignore.shape
        cx = min(int((det.box.left + det.box.right) / 2 * w), w - 1)
        cy = min(int((det.box.top + det.box.bottom) / 2 * h), h - 1)
        return not ignore[cy, cx]
    return True


def measure_pipeline(
    sequences: Iterable,
    make_detector: Callable[[], object],
    iou_threshold: float = 0.5,
    interpolation: str = ALL_POINT,
    classes: Sequence[int] | None = (1,),
    warmup_frames: int = 10,
    reference_frame: int | None = None,
    config: dict | None = None,
) -> tuple[EvalReport, list[FrameRecord]]:
    """Stream every sequence through a fresh detector and score the survivors.

    Detections are pooled over all sequences into one ranked list per class;
    only frames inside each sequence's temporal ROI are scored.  The first
    ``warmup_frames`` of every sequence are excluded from the timing figures
    but not from scoring or the head-invocation fraction.
    """
    records: list[FrameRecord] = []
    dets_all, gts_all = {}, {}
    per_seq = {}
    for seq in sequences:
        name = getattr(seq, "name", f"seq{len(per_seq)}")
        detector = make_detector()
        if reference_frame is not None:
            detector.reset(seq[reference_frame].frame)
        dets_seq, gts_seq = {}, {}
        for item in seq:
            try:
                result = detector.process_frame(item.frame)
            except Exception as exc:
                raise PipelineError(name, item.index, str(exc)) from exc
            records.append(FrameRecord(name, item.index, result, item.evaluated))
            if item.evaluated:
                key = (name, item.index)
                dets_seq[key] = [d for d in result.detections if _keep(d, classes, item.ignore)]
                gts_seq[key] = [g for g in item.ground_truth if classes is None or g.class_id in classes]
        dets_all.update(dets_seq)
        gts_all.update(gts_seq)
        per_seq[name] = match_and_score(dets_seq, gts_seq, iou_threshold, interpolation, classes).map

    scores = match_and_score(dets_all, gts_all, iou_threshold, interpolation, classes)

    timed = [r for r in records if r.index >= warmup_frames] or records
    totals = [r.result.total_us for r in timed]
    stage_mean = {s: float(np.mean([r.result.timings.get(s, 0.0) for r in timed])) if timed else 0.0
                  for s in STAGES}
    n = len(records)
    report = EvalReport(
        map=scores.map,
        per_class_ap=scores.per_class,
        per_sequence_map=per_seq,
        mean_frame_us=float(np.mean(totals)) if totals else 0.0,
        median_frame_us=float(statistics.median(totals)) if totals else 0.0,
        stage_mean_us=stage_mean,
        head_invocation_fraction=sum(r.result.head_invoked for r in records) / n if n else 0.0,
        frames=n,
        timed_frames=len(timed),
        moving_frames=sum(r.result.decision is Decision.MOVING for r in records),
        iou_threshold=iou_threshold,
        interpolation=interpolation,
        config=dict(config or {}),
        config_hash=config_hash(config or {}),
    )
    log.info("MAP %s, mean frame %.1f us, head fraction %.3f over %d frames",
             report.map, report.mean_frame_us, report.head_invocation_fraction, n)
    return report, records
