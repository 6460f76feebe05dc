"""Motion-gated object detection that reuses intermediate detector features.

Frames whose feature map matches the background model skip the detection
head entirely; boxes over regions without motion are dropped.
"""

from .core import (
    BackgroundModel,
    Decision,
    Detection,
    FeatureMap,
    GateConfig,
    GridRect,
    NormalizedBox,
    compute_motion_map,
    filter_detections,
    gate_frame,
    map_box_to_grid,
    update_background,
)
from .pipeline import FrameResult, MotionGatedDetector

__version__ = "0.1.0"

__all__ = [
    "BackgroundModel",
    "Decision",
    "Detection",
    "FeatureMap",
    "FrameResult",
    "GateConfig",
    "GridRect",
    "MotionGatedDetector",
    "NormalizedBox",
    "compute_motion_map",
    "filter_detections",
    "gate_frame",
    "map_box_to_grid",
    "update_background",
]
