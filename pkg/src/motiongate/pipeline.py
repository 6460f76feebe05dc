"""Per-frame motion-gated detection on top of a split detector."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import (
    BackgroundModel,
    Decision,
    Detection,
    FeatureMap,
    GateConfig,
    compute_motion_map,
    filter_detections,
    gate_frame,
    update_background,
)
from .errors import BackendError, MotionGateError

STAGES = ("extract", "gate", "head", "filter")


@dataclass
class FrameResult:
    decision: Decision
    detections: list[Detection]
    motion_max: float
    head_invoked: bool
    timings: dict[str, float] = field(default_factory=dict)  # microseconds per stage
    total_us: float = 0.0

    def __post_init__(self):
        if self.decision is Decision.STATIC and (self.detections or self.head_invoked):
            raise ValueError("a static frame cannot carry detections or a head run")


def _us(start: int) -> float:
    return (time.perf_counter_ns() - start) / 1000.0


def call_stage(stage: str, fn, *args):
    """Run a backend call, re-raising foreign exceptions tagged with ``stage``."""
    try:
        return fn(*args)
    except MotionGateError:
        raise
    except Exception as exc:
        raise BackendError(stage, f"{type(exc).__name__}: {exc}") from exc


class MotionGatedDetector:
    """Stateful per-stream detector that skips the head on static frames.

    The background is initialized from the first frame seen unless
    ``reset(reference_frame)`` was called beforehand.  With ``gating=False``
    the head runs on every frame; with ``filtering=False`` head output is
    returned unfiltered.  Both off gives the raw detector.
    """

    def __init__(self, backend, config: GateConfig, gating: bool = True, filtering: bool = True):
        self.backend = backend
        self.config = config
        self.gating = gating
        self.filtering = filtering
        self.background = BackgroundModel(config.alpha)

    def reset(self, reference_frame=None) -> None:
        self.background = BackgroundModel(self.config.alpha)
        if reference_frame is not None:
            self.background.initialize(call_stage("extract", self.backend.extract_features, reference_frame))

    def process_frame(self, frame: np.ndarray) -> FrameResult:
        t_frame = time.perf_counter_ns()
        timings = dict.fromkeys(STAGES, 0.0)

        t = time.perf_counter_ns()
        features: FeatureMap = call_stage("extract", self.backend.extract_features, frame)
        timings["extract"] = _us(t)

        t = time.perf_counter_ns()
        if self.gating or self.filtering:
            if not self.background.initialized:
                self.background.initialize(features)
            motion = compute_motion_map(self.background.map, features)
            motion_max = float(motion.max())
            lam = self.config.lambda_gate
            decision = gate_frame(motion, lam) if self.gating else Decision.MOVING
            # conditional on motion_max < lam, so independent of whether gating is on
            update_background(self.background, features, motion_max, lam)
        else:
            motion, motion_max, decision = None, 0.0, Decision.MOVING
        timings["gate"] = _us(t)

        if decision is Decision.STATIC:
            return FrameResult(decision, [], motion_max, False, timings, _us(t_frame))

        t = time.perf_counter_ns()
        detections = call_stage("head", self.backend.run_head, frame, features)
        timings["head"] = _us(t)

        t = time.perf_counter_ns()
        if self.filtering:
            detections = filter_detections(detections, motion, self.config.filter_threshold)
        timings["filter"] = _us(t)
        return FrameResult(decision, detections, motion_max, True, timings, _us(t_frame))
