"""Feature-space motion maps, background maintenance, gating and box filtering.

A feature map is an ``(H, W, C)`` grid of activation vectors taken from an
intermediate layer of the detector.  Each cell is compared with the same cell
of a background model by cosine dissimilarity; the resulting ``(H, W)`` motion
map decides whether the rest of the detector needs to run at all, and which of
its boxes sit on something that actually moved.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ShapeError

# Floating slack when snapping continuous box edges to integer cells, so that
# e.g. 0.7 * 10 = 7.000000000000001 does not spill into an extra column.
_EDGE_EPS = 1e-9


class Decision(str, enum.Enum):
    STATIC = "static"
    MOVING = "moving"


@dataclass(eq=False)
class FeatureMap:
    """Activation grid of shape ``(height, width, channels)``.

    ``activations`` is an opaque per-backend cache (e.g. intermediate tensors
    the detection head needs); core operations only ever look at ``values``.
    """

    values: np.ndarray
    activations: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3 or min(values.shape) < 1:
            raise ShapeError(f"feature map must be (H, W, C) with every dim >= 1, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("feature map contains NaN or Inf")
        self.values = values

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape


def _grid(fm) -> np.ndarray:
    if isinstance(fm, FeatureMap):
        return fm.values
    return FeatureMap(fm).values


@dataclass(frozen=True)
class NormalizedBox:
    """Box edges as fractions of the frame extent, ``0 <= left < right <= 1``."""

    left: float
    top: float
    right: float
    bottom: float

    def __post_init__(self):
        if not (0.0 <= self.left < self.right <= 1.0 and 0.0 <= self.top < self.bottom <= 1.0):
            raise ValueError(f"invalid normalized box {self.as_tuple()}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.left, self.top, self.right, self.bottom)

    @property
    def area(self) -> float:
        return (self.right - self.left) * (self.bottom - self.top)


@dataclass(frozen=True)
class Detection:
    box: NormalizedBox
    class_id: int
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"detection score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class GridRect:
    """Half-open cell rectangle ``[left, right) x [top, bottom)``."""

    left: int
    top: int
    right: int
    bottom: int

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.left, self.top, self.right, self.bottom)

    def slice(self, grid: np.ndarray) -> np.ndarray:
        return grid[self.top:self.bottom, self.left:self.right]


@dataclass(frozen=True)
class GateConfig:
    """Split layer ``m``, thresholds and EMA decay for one pipeline.

    ``lambda_filter`` defaults to ``lambda_gate``; the two only differ when
    explicitly configured.
    """

    layer_index: int = 11
    lambda_gate: float = 0.4
    alpha: float = 0.9
    lambda_filter: float | None = None

    def __post_init__(self):
        if self.layer_index < 1:
            raise ValueError(f"layer_index must be >= 1, got {self.layer_index}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        for name in ("lambda_gate", "lambda_filter"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")

    @property
    def filter_threshold(self) -> float:
        return self.lambda_gate if self.lambda_filter is None else self.lambda_filter


class BackgroundModel:
    """Exponential moving average of feature maps.

    Owned by a single stream; ``update_background`` mutates it in place.
    """

    def __init__(self, alpha: float, reference=None):
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
        self.alpha = float(alpha)
        self.map: np.ndarray | None = None
        if reference is not None:
            self.initialize(reference)

    @property
    def initialized(self) -> bool:
        return self.map is not None

    def initialize(self, reference) -> None:
        grid = _grid(reference)
        if self.map is not None and self.map.shape != grid.shape:
            raise ShapeError(f"background is {self.map.shape}, reference is {grid.shape}")
        self.map = grid.copy()

    def __repr__(self):
        shape = None if self.map is None else self.map.shape
        return f"BackgroundModel(alpha={self.alpha}, shape={shape})"


def compute_motion_map(background, current) -> np.ndarray:
    """Per-cell cosine dissimilarity ``1 - cos(bg[y, x], cur[y, x])``.

    Cells where both vectors are zero score 0 (nothing there, nothing changed);
    cells where exactly one is zero score 1.  Values lie in ``[0, 2]`` and in
    ``[0, 1]`` for non-negative activations.
    """
    bg = _grid(background)
    cur = _grid(current)
    if bg.shape != cur.shape:
        raise ShapeError(f"background {bg.shape} and current {cur.shape} differ")

    dot = np.einsum("hwc,hwc->hw", bg, cur)
    norm_bg = np.linalg.norm(bg, axis=-1)
    norm_cur = np.linalg.norm(cur, axis=-1)
    denom = norm_bg * norm_cur

    both_zero = (norm_bg == 0) & (norm_cur == 0)
    one_zero = (norm_bg == 0) ^ (norm_cur == 0)
    # denom can underflow to 0 for tiny but non-zero vectors; treat like one_zero
    ok = denom > 0
    motion = np.ones_like(dot)
    np.divide(dot, denom, out=motion, where=ok)
    motion = np.where(ok, 1.0 - motion, 1.0)
    motion[both_zero] = 0.0
    motion[one_zero] = 1.0
    # rounding can push identical vectors a hair below 0
    return np.clip(motion, 0.0, 2.0)


def gate_frame(motion: np.ndarray, lam: float) -> Decision:
    """Moving iff the strongest cell reaches ``lam``.

    Ties go to Moving because the background only absorbs frames whose
    maximum is strictly below the threshold.
    """
    motion = np.asarray(motion)
    if motion.size == 0:
        raise ShapeError("motion map is empty")
    return Decision.MOVING if float(motion.max()) >= lam else Decision.STATIC


def update_background(model: BackgroundModel, current, motion_max: float, lam: float) -> BackgroundModel:
    """Blend ``current`` into the background when the frame was static."""
    if not model.initialized:
        raise ValueError("background model is not initialized")
    cur = _grid(current)
    if cur.shape != model.map.shape:
        raise ShapeError(f"background {model.map.shape} and current {cur.shape} differ")
    if motion_max < lam:
        model.map = model.alpha * model.map + (1.0 - model.alpha) * cur
    return model


def map_box_to_grid(box: NormalizedBox, grid_h: int, grid_w: int) -> GridRect:
    """Smallest cell rectangle covering ``box`` on a ``grid_h x grid_w`` grid.

    Left/top are floored and right/bottom ceiled, then clamped, so the result
    is never empty.  With ``grid_h, grid_w = H_in, W_in`` this maps to pixels.
    """
    if grid_h < 1 or grid_w < 1:
        raise ValueError(f"grid must be at least 1x1, got {grid_h}x{grid_w}")
    left = math.floor(box.left * grid_w + _EDGE_EPS)
    top = math.floor(box.top * grid_h + _EDGE_EPS)
    right = math.ceil(box.right * grid_w - _EDGE_EPS)
    bottom = math.ceil(box.bottom * grid_h - _EDGE_EPS)

    left = min(max(left, 0), grid_w - 1)
    top = min(max(top, 0), grid_h - 1)
    right = min(max(right, left + 1), grid_w)
    bottom = min(max(bottom, top + 1), grid_h)
    return GridRect(left, top, right, bottom)


def region_mean(grid: np.ndarray, box: NormalizedBox) -> float:
    grid = np.asarray(grid)
    rect = map_box_to_grid(box, grid.shape[0], grid.shape[1])
    return float(rect.slice(grid).mean())


def filter_detections(detections: Sequence[Detection], motion: np.ndarray, lam: float) -> list[Detection]:
    """Keep detections whose mean motion over the covered cells is at least ``lam``.

    Partially covered edge cells count at full weight.
    """
    motion = np.asarray(motion)
    return [d for d in detections if region_mean(motion, d.box) >= lam]
