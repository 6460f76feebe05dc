"""Procedural test scenes: one moving bright blob and an optional static distractor."""

from __future__ import annotations

from dataclasses import dataclass, field

import cv2
import numpy as np

from ..core import Detection, NormalizedBox
from ..evaluation.metrics import GroundTruthBox
from .augment import DistractorConfig, NoiseConfig
from .sequence import ArraySequence


def silhouette_patch(height: int, width: int, intensity: int, backdrop: int) -> np.ndarray:
    """Crude standing-figure patch: head disc over a torso block."""
    patch = np.full((height, width, 3), backdrop, dtype=np.uint8)
    r = max(1, width // 5)
    cv2.circle(patch, (width // 2, r + 1), r, (intensity,) * 3, thickness=-1)
    cv2.rectangle(patch, (width // 4, 2 * r + 2), (3 * width // 4, height - 1), (intensity,) * 3, thickness=-1)
    return patch


@dataclass
class SyntheticScene:
    n_frames: int = 300
    height: int = 300
    width: int = 300
    background: int = 30
    # amplitude of a fixed seeded texture added to the backdrop
    texture: int = 0
    texture_seed: int = 0
    blob_size: tuple[int, int] = (60, 60)  # (h, w)
    blob_intensity: int = 200
    blob_frames: tuple[int, int] = (100, 150)  # [start, stop)
    blob_start: tuple[int, int] = (20, 200)  # (x, y) top-left
    blob_end: tuple[int, int] = (240, 200)
    distractor_box: tuple[float, float, float, float] | None = (0.6, 0.1, 0.8, 0.5)
    distractor_intensity: int = 100
    distractor_start: int = 0
    noise: NoiseConfig | None = None
    class_id: int = 1

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticScene":
        data = dict(data)
        for key in ("blob_size", "blob_frames", "blob_start", "blob_end", "distractor_box"):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        if isinstance(data.get("noise"), dict):
            data["noise"] = NoiseConfig(**data["noise"])
        return cls(**data)

    def backdrop(self) -> np.ndarray:
        base = np.full((self.height, self.width, 3), float(self.background))
        if self.texture:
            rng = np.random.default_rng(self.texture_seed)
            tex = rng.uniform(-self.texture, self.texture, size=(self.height // 10 + 1, self.width // 10 + 1))
            tex = cv2.resize(tex, (self.width, self.height), interpolation=cv2.INTER_LINEAR)
            base += tex[..., None]
        return np.clip(np.rint(base), 0, 255).astype(np.uint8)

    def blob_position(self, index: int) -> tuple[int, int] | None:
        start, stop = self.blob_frames
        if not start <= index < stop:
            return None
        t = 0.0 if stop - start <= 1 else (index - start) / (stop - start - 1)
        x = round(self.blob_start[0] + t * (self.blob_end[0] - self.blob_start[0]))
        y = round(self.blob_start[1] + t * (self.blob_end[1] - self.blob_start[1]))
        return x, y

    def blob_box(self, index: int) -> NormalizedBox | None:
        pos = self.blob_position(index)
        if pos is None:
            return None
        x, y = pos
        h, w = self.blob_size
        return NormalizedBox(x / self.width, y / self.height, (x + w) / self.width, (y + h) / self.height)

    def distractor(self) -> DistractorConfig | None:
        if self.distractor_box is None:
            return None
        box = NormalizedBox(*self.distractor_box)
        ph = round((box.bottom - box.top) * self.height)
        pw = round((box.right - box.left) * self.width)
        patch = silhouette_patch(ph, pw, self.distractor_intensity, self.background)
        return DistractorConfig(patch, box, self.distractor_start)

    def distractor_detection(self, score: float = 0.95) -> Detection:
        """The hallucinated box a detector would emit on the distractor."""
        return Detection(NormalizedBox(*self.distractor_box), self.class_id, score)

    def render(self, index: int, backdrop: np.ndarray | None = None) -> np.ndarray:
        frame = (self.backdrop() if backdrop is None else backdrop).copy()
        pos = self.blob_position(index)
        if pos is not None:
            x, y = pos
            h, w = self.blob_size
            frame[y:y + h, x:x + w] = self.blob_intensity
        return frame

    def ground_truth(self, index: int) -> list[GroundTruthBox]:
        box = self.blob_box(index)
        return [] if box is None else [GroundTruthBox(box, self.class_id, index)]

    def moving_frames(self) -> set[int]:
        start, stop = self.blob_frames
        return set(range(max(start, 0), min(stop, self.n_frames)))

    def build(self, name: str = "synthetic", input_size: tuple[int, int] | None = None) -> ArraySequence:
        backdrop = self.backdrop()
        frames = [self.render(i, backdrop) for i in range(self.n_frames)]
        gts = [self.ground_truth(i) for i in range(self.n_frames)]
        return ArraySequence(frames, gts, name=name, input_size=input_size,
                             distractor=self.distractor(), noise=self.noise)
