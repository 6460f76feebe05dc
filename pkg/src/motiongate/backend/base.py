"""Split-detector contract shared by every backend."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from ..core import Detection, FeatureMap
from ..errors import LayerRangeError, ShapeError


@dataclass(frozen=True)
class SplitDetectorSpec:
    """Where a detector is cut and what the cut produces.

    Layers ``1..split_index`` form the extractor prefix whose output is the
    ``grid_height x grid_width x grid_channels`` feature map; everything after
    belongs to the head.
    """

    layer_count: int
    split_index: int
    input_height: int
    input_width: int
    grid_height: int
    grid_width: int
    grid_channels: int

    def __post_init__(self):
        if not 1 <= self.split_index <= self.layer_count:
            raise LayerRangeError(f"split index {self.split_index} outside [1, {self.layer_count}]")

    @property
    def grid_shape(self) -> tuple[int, int, int]:
        return (self.grid_height, self.grid_width, self.grid_channels)


def check_layer(m: int, layer_count: int) -> int:
    if not 1 <= m <= layer_count:
        raise LayerRangeError(f"layer {m} outside [1, {layer_count}]")
    return m


def as_frame(frame, height: int | None = None, width: int | None = None) -> np.ndarray:
    """Validate an ``(H, W, 3)`` frame, optionally against expected dims."""
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[2] != 3 or frame.shape[0] < 1 or frame.shape[1] < 1:
        raise ShapeError(f"frame must be (H, W, 3), got {frame.shape}")
    if height is not None and (frame.shape[0], frame.shape[1]) != (height, width):
        raise ShapeError(f"frame is {frame.shape[0]}x{frame.shape[1]}, backend expects {height}x{width}")
    return frame


@runtime_checkable
class SplitDetector(Protocol):
    """What the pipeline needs from a backend.

    One in-flight inference per handle; callers serialize access.
    """

    spec: SplitDetectorSpec

    def extract_features(self, frame: np.ndarray) -> FeatureMap: ...

    def run_head(self, frame: np.ndarray, features: FeatureMap) -> list[Detection]: ...

    def detect(self, frame: np.ndarray) -> list[Detection]: ...
