"""Pixel-intensity L2 gate used as the comparison baseline.

Same structure as the feature-space gate: an EMA background, a per-cell score
grid, gate on the maximum cell, filter boxes by mean cell score.  Scores are
in raw intensity units, so thresholds live on a very different scale
(hundreds to thousands) than the cosine thresholds.
"""

from __future__ import annotations

import time

import numpy as np

from .backend.base import as_frame
from .core import Decision, filter_detections
from .errors import ShapeError
from .pipeline import STAGES, FrameResult, _us, call_stage


class PixelBackground:
    def __init__(self, alpha: float, reference=None):
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
        self.alpha = float(alpha)
        self.image: np.ndarray | None = None
        if reference is not None:
            self.initialize(reference)

    @property
    def initialized(self) -> bool:
        return self.image is not None

    def initialize(self, frame) -> None:
        frame = as_frame(frame).astype(np.float64)
        if self.image is not None and self.image.shape != frame.shape:
            raise ShapeError(f"background is {self.image.shape}, frame is {frame.shape}")
        self.image = frame

    def update(self, frame, score_max: float, threshold: float) -> None:
        frame = as_frame(frame)
        if frame.shape != self.image.shape:
            raise ShapeError(f"background is {self.image.shape}, frame is {frame.shape}")
        if score_max < threshold:
            self.image = self.alpha * self.image + (1.0 - self.alpha) * frame


def cell_edges(extent: int, cells: int) -> np.ndarray:
    """Boundaries splitting ``extent`` pixels into ``cells`` near-equal runs."""
    if not 1 <= cells <= extent:
        raise ValueError(f"cannot split {extent} pixels into {cells} cells")
    return (np.arange(cells + 1) * extent) // cells


def pixel_motion_score(background: PixelBackground, frame, grid_h: int, grid_w: int) -> np.ndarray:
    """Per-cell Euclidean norm of ``frame - background`` over all pixels and channels."""
    frame = as_frame(frame)
    if background.image is None:
        raise ValueError("pixel background is not initialized")
    if frame.shape != background.image.shape:
        raise ShapeError(f"background is {background.image.shape}, frame is {frame.shape}")
    sq = (frame.astype(np.float64) - background.image) ** 2
    sq = sq.sum(axis=2)
    rows = cell_edges(frame.shape[0], grid_h)[:-1]
    cols = cell_edges(frame.shape[1], grid_w)[:-1]
    return np.sqrt(np.add.reduceat(np.add.reduceat(sq, rows, axis=0), cols, axis=1))


def baseline_gate(scores: np.ndarray, threshold: float) -> Decision:
    if threshold < 0:
        raise ValueError(f"baseline threshold must be >= 0, got {threshold}")
    return Decision.MOVING if float(np.max(scores)) >= threshold else Decision.STATIC


class PixelGatedDetector:
    """Baseline pipeline: gate on pixel L2 before touching the network.

    Static frames skip the whole detector (extractor included); Moving frames
    run the full network and keep boxes whose mean cell score reaches the
    threshold.  The score grid matches the backend's feature grid.
    """

    def __init__(self, backend, threshold: float, alpha: float, filtering: bool = True):
        if threshold < 0:
            raise ValueError(f"baseline threshold must be >= 0, got {threshold}")
        self.backend = backend
        self.threshold = float(threshold)
        self.alpha = alpha
        self.filtering = filtering
        self.grid = (backend.spec.grid_height, backend.spec.grid_width)
        self.background = PixelBackground(alpha)

    def reset(self, reference_frame=None) -> None:
        self.background = PixelBackground(self.alpha, reference_frame)

    def process_frame(self, frame: np.ndarray) -> FrameResult:
        t_frame = time.perf_counter_ns()
        timings = dict.fromkeys(STAGES, 0.0)

        t = time.perf_counter_ns()
        if not self.background.initialized:
            self.background.initialize(frame)
        scores = pixel_motion_score(self.background, frame, *self.grid)
        score_max = float(scores.max())
        decision = baseline_gate(scores, self.threshold)
        self.background.update(frame, score_max, self.threshold)
        timings["gate"] = _us(t)

        if decision is Decision.STATIC:
            return FrameResult(decision, [], score_max, False, timings, _us(t_frame))

        t = time.perf_counter_ns()
        features = call_stage("extract", self.backend.extract_features, frame)
        timings["extract"] = _us(t)

        t = time.perf_counter_ns()
        detections = call_stage("head", self.backend.run_head, frame, features)
        timings["head"] = _us(t)

        t = time.perf_counter_ns()
        if self.filtering:
            detections = filter_detections(detections, scores, self.threshold)
        timings["filter"] = _us(t)
        return FrameResult(decision, detections, score_max, True, timings, _us(t_frame))
