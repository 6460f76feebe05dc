"""Deterministic stand-in detector with analytically predictable features.

The extractor summarizes each ``B x B`` pixel block with its per-channel mean
intensity ``mu`` and the complement ``1 - mu`` (an on/off pair, so that pure
brightness changes alter the vector's direction, not only its length).  An
optional seeded non-negative projection maps these 6 values to ``C`` channels.

The head is a luminance-threshold blob detector plus a list of canned
detections that fire on every frame regardless of content, which is how tests
simulate a detector hallucinating on a static distractor.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import cv2
import numpy as np

from ..core import Detection, FeatureMap, NormalizedBox
from .base import SplitDetectorSpec, as_frame, check_layer

DEFAULT_BLOCK_SIZES = (2, 3, 4, 5, 6, 10, 12, 15, 20, 25, 30)


@dataclass
class MockConfig:
    input_height: int = 300
    input_width: int = 300
    # block size per layer; larger m -> coarser grid, like a CNN's receptive field
    block_sizes: tuple[int, ...] = DEFAULT_BLOCK_SIZES
    split_index: int = 11
    projection_dim: int | None = None
    projection_seed: int = 0
    # blob head
    threshold: float = 128.0
    min_area: int = 16
    blur: int = 1
    class_id: int = 1
    canned: list[Detection] = field(default_factory=list)
    # artificial per-stage cost, seconds
    extract_delay: float = 0.0
    head_delay: float = 0.0

    @classmethod
    def from_dict(cls, data: dict) -> "MockConfig":
        data = dict(data)
        if "block_sizes" in data:
            data["block_sizes"] = tuple(int(b) for b in data["block_sizes"])
        if "canned" in data:
            data["canned"] = [
                c if isinstance(c, Detection)
                else Detection(NormalizedBox(*c["box"]), int(c.get("class_id", 1)), float(c.get("score", 1.0)))
                for c in data["canned"]
            ]
        return cls(**data)


def to_unit(frame: np.ndarray) -> np.ndarray:
    """Intensities in [0, 1]: ``uint8`` is divided by 255, floats pass through."""
    if frame.dtype == np.uint8:
        return frame.astype(np.float64) / 255.0
    return frame.astype(np.float64)


def block_means(image: np.ndarray, block: int) -> np.ndarray:
    """Mean over non-overlapping ``block x block`` tiles; edge tiles may be partial."""
    h, w = image.shape[:2]
    rows = np.arange(0, h, block)
    cols = np.arange(0, w, block)
    sums = np.add.reduceat(np.add.reduceat(image, rows, axis=0), cols, axis=1)
    row_n = np.diff(np.append(rows, h))
    col_n = np.diff(np.append(cols, w))
    counts = np.outer(row_n, col_n)
    return sums / counts.reshape(counts.shape + (1,) * (image.ndim - 2))


def _spin(seconds: float) -> None:
    if seconds > 0:
        time.sleep(seconds)


class MockBackend:
    """Block-mean extractor and blob-detector head.

    ``extract_calls`` and ``head_calls`` count executions of the two halves.
    """

    def __init__(self, config: MockConfig | None = None, **overrides):
        config = config or MockConfig()
        if overrides:
            config = replace(config, **overrides)
        self.config = config
        check_layer(config.split_index, len(config.block_sizes))
        self.block = int(config.block_sizes[config.split_index - 1])

        base_channels = 6
        self._projection = None
        if config.projection_dim:
            rng = np.random.default_rng(config.projection_seed)
            # non-negative weights keep activations non-negative and never all-zero
            self._projection = rng.random((base_channels, config.projection_dim))
        channels = config.projection_dim or base_channels
        self.spec = SplitDetectorSpec(
            layer_count=len(config.block_sizes),
            split_index=config.split_index,
            input_height=config.input_height,
            input_width=config.input_width,
            grid_height=math.ceil(config.input_height / self.block),
            grid_width=math.ceil(config.input_width / self.block),
            grid_channels=channels,
        )
        self.extract_calls = 0
        self.head_calls = 0

    def extract_features(self, frame: np.ndarray) -> FeatureMap:
        frame = as_frame(frame, self.spec.input_height, self.spec.input_width)
        self.extract_calls += 1
        _spin(self.config.extract_delay)
        means = block_means(to_unit(frame), self.block)
        desc = np.concatenate([means, 1.0 - means], axis=-1)
        if self._projection is not None:
            desc = desc @ self._projection
        return FeatureMap(desc)

    def run_head(self, frame: np.ndarray, features: FeatureMap) -> list[Detection]:
        frame = as_frame(frame, self.spec.input_height, self.spec.input_width)
        self.head_calls += 1
        _spin(self.config.head_delay)
        return self.find_blobs(frame) + list(self.config.canned)

    def detect(self, frame: np.ndarray) -> list[Detection]:
        return self.run_head(frame, self.extract_features(frame))

    def find_blobs(self, frame: np.ndarray) -> list[Detection]:
        cfg = self.config
        unit = to_unit(frame)
        lum = 255.0 * (0.299 * unit[..., 0] + 0.587 * unit[..., 1] + 0.114 * unit[..., 2])
        smoothed = cv2.blur(lum, (cfg.blur, cfg.blur)) if cfg.blur > 1 else lum
        mask = (smoothed >= cfg.threshold).astype(np.uint8)
        n, labels, stats, _ = cv2.connectedComponentsWithStats(mask, connectivity=8)
        h, w = mask.shape
        found = []
        for label in range(1, n):
            x, y, bw, bh, area = (int(v) for v in stats[label])
            if area < cfg.min_area:
                continue
            score = float(np.clip(lum[labels == label].mean() / 255.0, 0.0, 1.0))
            box = NormalizedBox(x / w, y / h, (x + bw) / w, (y + bh) / h)
            found.append(Detection(box, cfg.class_id, score))
        return found
