"""Static distractor overlay and multiplicative Gaussian sensor noise."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from ..core import NormalizedBox, map_box_to_grid
from ..errors import DatasetError


@dataclass(frozen=True)
class NoiseConfig:
    mu: float = 0.8
    sigma: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")


@dataclass
class DistractorConfig:
    """A patch pasted at ``placement`` on every frame from ``start`` on.

    ``patch`` is an image path or an ``(h, w, 3|4)`` array; a 4th channel is
    used as alpha, otherwise the patch is opaque.
    """

    patch: object
    placement: NormalizedBox
    start: int = 0

    def __post_init__(self):
        if not isinstance(self.placement, NormalizedBox):
            self.placement = NormalizedBox(*self.placement)
        self._cache: dict[tuple[int, int], np.ndarray] = {}

    def load_patch(self) -> np.ndarray:
        if isinstance(self.patch, np.ndarray):
            return self.patch
        path = Path(self.patch)
        img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
        if img is None:
            raise DatasetError(f"cannot read distractor patch {path}")
        if img.ndim == 2:
            img = np.repeat(img[..., None], 3, axis=2)
        order = [2, 1, 0, 3] if img.shape[2] == 4 else [2, 1, 0]
        return img[..., order]

    def patch_for(self, width: int, height: int) -> np.ndarray:
        if (width, height) not in self._cache:
            self._cache[(width, height)] = cv2.resize(self.load_patch(), (width, height),
                                                      interpolation=cv2.INTER_LINEAR)
        return self._cache[(width, height)]


def overlay_distractor(frame: np.ndarray, cfg: DistractorConfig, frame_index: int = 0) -> np.ndarray:
    """Composite the distractor patch into a copy of ``frame``."""
    if frame_index < cfg.start:
        return frame
    h, w = frame.shape[:2]
    rect = map_box_to_grid(cfg.placement, h, w)
    pw, ph = rect.right - rect.left, rect.bottom - rect.top
    patch = cfg.patch_for(pw, ph)
    out = frame.copy()
    region = out[rect.top:rect.bottom, rect.left:rect.right]
    if patch.shape[2] == 4:
        a = patch[..., 3:4].astype(np.float64) / (255.0 if patch.dtype == np.uint8 else 1.0)
        blended = a * patch[..., :3] + (1.0 - a) * region
        region[...] = np.rint(blended).astype(frame.dtype) if frame.dtype == np.uint8 else blended
    else:
        region[...] = patch[..., :3]
    return out


def frame_rng(seed: int, frame_index: int) -> np.random.Generator:
    """Generator keyed on (seed, frame) so any processing order draws the same noise."""
    return np.random.default_rng([seed, frame_index])


def apply_noise(frame: np.ndarray, cfg: NoiseConfig, frame_index: int = 0) -> np.ndarray:
    """Multiply every pixel and channel by an independent N(mu, sigma^2) draw.

    ``uint8`` frames are clamped to [0, 255] and rounded half-to-even; float
    frames are clamped to [0, 1].
    """
    gain = frame_rng(cfg.seed, frame_index).normal(cfg.mu, cfg.sigma, size=frame.shape)
    noisy = frame.astype(np.float64) * gain
    if frame.dtype == np.uint8:
        return np.rint(np.clip(noisy, 0.0, 255.0)).astype(np.uint8)
    return np.clip(noisy, 0.0, 1.0)


def augment_frame(frame: np.ndarray, frame_index: int, distractor: DistractorConfig | None = None,
                  noise: NoiseConfig | None = None) -> np.ndarray:
    """Distractor first, then noise, so the pasted object is exposed to the same sensor."""
    if distractor is not None:
        frame = overlay_distractor(frame, distractor, frame_index)
    if noise is not None:
        frame = apply_noise(frame, noise, frame_index)
    return frame
