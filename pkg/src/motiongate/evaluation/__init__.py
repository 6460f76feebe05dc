"""Detection scoring and pipeline measurement."""

from .measure import EvalReport, FrameRecord, config_hash, measure_pipeline
from .metrics import ALL_POINT, ELEVEN_POINT, APResult, GroundTruthBox, average_precision, iou, match_and_score

__all__ = [
    "ALL_POINT",
    "ELEVEN_POINT",
    "APResult",
    "EvalReport",
    "FrameRecord",
    "GroundTruthBox",
    "average_precision",
    "config_hash",
    "iou",
    "match_and_score",
    "measure_pipeline",
]
