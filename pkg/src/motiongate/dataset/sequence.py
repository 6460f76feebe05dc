"""Frame-directory sequences with CDNet-style ground truth.

A manifest is a JSON document; relative paths resolve against its folder::

    {
      "name": "pedestrians",
      "frames_dir": "input",          "frames_glob": "in*.jpg",
      "groundtruth_dir": "groundtruth", "groundtruth_glob": "gt*.png",
      "temporal_roi_file": "temporalROI.txt",
      "class_id": 1, "min_area": 50
    }

``frames`` (explicit list) may replace ``frames_dir``; ``boxes_file`` (JSON
mapping 1-based frame number to ``[[left, top, right, bottom], ...]`` in
normalized units) may replace the mask directory; ``temporal_roi`` may be
given inline as ``[first, last]``.  Frame numbers are 1-based as in CDNet.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from ..core import NormalizedBox
from ..errors import DatasetError
from ..evaluation.metrics import GroundTruthBox
from .augment import DistractorConfig, NoiseConfig, augment_frame

CDNET_STATIC = 0
CDNET_SHADOW = 50
CDNET_OUTSIDE_ROI = 85
CDNET_UNKNOWN = 170
CDNET_MOTION = 255


def masks_to_boxes(mask: np.ndarray, min_area: int = 50, class_id: int = 1, frame_index: int = -1,
                   foreground: int = CDNET_MOTION) -> list[GroundTruthBox]:
    """Tight boxes around 8-connected foreground components, sorted by (top, left).

    Only pixels equal to ``foreground`` count; shadow, unknown and
    outside-ROI labels are background here.
    """
    mask = np.asarray(mask)
    if mask.ndim == 3:
        mask = mask[..., 0]
    fg = (mask == foreground).astype(np.uint8)
    h, w = fg.shape
    n, _, stats, _ = cv2.connectedComponentsWithStats(fg, connectivity=8)
    boxes = []
    for x, y, bw, bh, area in stats[1:n]:
        if area < min_area:
            continue
        boxes.append((int(y), int(x), int(bw), int(bh)))
    boxes.sort()
    return [GroundTruthBox(NormalizedBox(x / w, y / h, (x + bw) / w, (y + bh) / h), class_id, frame_index)
            for y, x, bw, bh in boxes]


def read_rgb(path: Path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if img is None:
        raise DatasetError(f"cannot read frame {path}")
    return cv2.cvtColor(img, cv2.COLOR_BGR2RGB)


def read_mask(path: Path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if img is None:
        raise DatasetError(f"cannot read ground-truth mask {path}")
    return img


@dataclass
class SequenceItem:
    index: int
    frame: np.ndarray
    # None outside the temporal ROI: streamed for warm-up, not scored
    ground_truth: list[GroundTruthBox] | None
    scale: tuple[float, float] = (1.0, 1.0)
    ignore: np.ndarray | None = field(default=None, repr=False)

    @property
    def evaluated(self) -> bool:
        return self.ground_truth is not None


class Sequence:
    """Indexable, iterable frame stream with augmentation and resizing.

    Subclasses implement ``__len__`` and ``raw(i)`` returning the native
    frame, its ground truth (or None) and an optional ignore mask.
    """

    name = "sequence"

    def __init__(self, input_size: tuple[int, int] | None = None, distractor: DistractorConfig | None = None,
                 noise: NoiseConfig | None = None):
        self.input_size = input_size
        self.distractor = distractor
        self.noise = noise

    def __len__(self) -> int:
        raise NotImplementedError

    def raw(self, index: int):
        raise NotImplementedError

    def __getitem__(self, index: int) -> SequenceItem:
        if not 0 <= index < len(self):
            raise IndexError(index)
        frame, gt, ignore = self.raw(index)
        frame = augment_frame(frame, index, self.distractor, self.noise)
        scale = (1.0, 1.0)
        if self.input_size is not None and frame.shape[:2] != tuple(self.input_size):
            h_in, w_in = self.input_size
            scale = (w_in / frame.shape[1], h_in / frame.shape[0])
            frame = cv2.resize(frame, (w_in, h_in), interpolation=cv2.INTER_LINEAR)
        return SequenceItem(index, frame, gt, scale, ignore)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


class ArraySequence(Sequence):
    """In-memory frames; ``ground_truth[i]`` is a box list or None."""

    def __init__(self, frames, ground_truth=None, name: str = "synthetic", **kwargs):
        super().__init__(**kwargs)
        self.frames = list(frames)
        self.ground_truth = list(ground_truth) if ground_truth is not None else [None] * len(self.frames)
        if len(self.ground_truth) != len(self.frames):
            raise DatasetError("frames and ground truth differ in length")
        self.name = name

    def __len__(self):
        return len(self.frames)

    def raw(self, index):
        return self.frames[index], self.ground_truth[index], None


@dataclass
class SequenceManifest:
    name: str
    frames: list[Path]
    masks: list[Path] | None = None
    boxes: dict[int, list[GroundTruthBox]] | None = None
    temporal_roi: tuple[int, int] | None = None
    class_id: int = 1
    min_area: int = 50

    def __post_init__(self):
        if not self.frames:
            raise DatasetError(f"manifest {self.name!r} lists no frames")
        missing = [p for p in self.frames if not Path(p).is_file()]
        if missing:
            raise DatasetError(f"manifest {self.name!r}: {len(missing)} frame files missing, first {missing[0]}")

    def in_roi(self, number: int) -> bool:
        if self.temporal_roi is None:
            return True
        first, last = self.temporal_roi
        return first <= number <= last


def _read_roi(path: Path) -> tuple[int, int]:
    try:
        first, last = (int(v) for v in path.read_text().split()[:2])
    except (OSError, ValueError) as exc:
        raise DatasetError(f"cannot read temporal ROI {path}: {exc}") from exc
    return first, last


def _read_boxes(path: Path, class_id: int) -> dict[int, list[GroundTruthBox]]:
    with open(path) as fh:
        data = json.load(fh)
    out = {}
    for number, rows in data.items():
        n = int(number)
        out[n] = [GroundTruthBox(NormalizedBox(*row[:4]), int(row[4]) if len(row) > 4 else class_id, n - 1)
                  for row in rows]
    return out


def parse_manifest(data: dict, base: Path = Path(".")) -> SequenceManifest:
    def resolve(p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else base / p

    class_id = int(data.get("class_id", 1))
    if "frames" in data:
        frames = [resolve(p) for p in data["frames"]]
    elif "frames_dir" in data:
        frames = sorted(resolve(data["frames_dir"]).glob(data.get("frames_glob", "*")))
    else:
        raise DatasetError("manifest needs 'frames' or 'frames_dir'")

    masks = boxes = None
    if "groundtruth_dir" in data:
        masks = sorted(resolve(data["groundtruth_dir"]).glob(data.get("groundtruth_glob", "*")))
    elif "boxes_file" in data:
        boxes = _read_boxes(resolve(data["boxes_file"]), class_id)

    roi = None
    if "temporal_roi" in data:
        roi = tuple(int(v) for v in data["temporal_roi"])
    elif "temporal_roi_file" in data:
        roi = _read_roi(resolve(data["temporal_roi_file"]))

    return SequenceManifest(
        name=data.get("name", base.name),
        frames=frames,
        masks=masks,
        boxes=boxes,
        temporal_roi=roi,
        class_id=class_id,
        min_area=int(data.get("min_area", 50)),
    )


def load_manifest(path) -> SequenceManifest:
    path = Path(path)
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read manifest {path}: {exc}") from exc
    return parse_manifest(data, path.parent)


def cdnet_manifest(video_dir, min_area: int = 50, class_id: int = 1) -> SequenceManifest:
    """Manifest for a CDNet2014 video folder (``input/``, ``groundtruth/``, ``temporalROI.txt``)."""
    video_dir = Path(video_dir)
    data = {
        "name": video_dir.name,
        "frames_dir": "input",
        "frames_glob": "in*.jpg",
        "groundtruth_dir": "groundtruth",
        "groundtruth_glob": "gt*.png",
        "class_id": class_id,
        "min_area": min_area,
    }
    if (video_dir / "temporalROI.txt").is_file():
        data["temporal_roi_file"] = "temporalROI.txt"
    return parse_manifest(data, video_dir)


class ManifestSequence(Sequence):
    def __init__(self, manifest: SequenceManifest, **kwargs):
        super().__init__(**kwargs)
        self.manifest = manifest
        self.name = manifest.name

    def __len__(self):
        return len(self.manifest.frames)

    def raw(self, index):
        m = self.manifest
        frame = read_rgb(m.frames[index])
        number = index + 1
        if not m.in_roi(number):
            return frame, None, None
        if m.masks is not None:
            if index >= len(m.masks):
                raise DatasetError(f"{m.name}: no ground-truth mask for evaluated frame {number}")
            mask = read_mask(m.masks[index])
            ignore = mask == CDNET_OUTSIDE_ROI
            gt = masks_to_boxes(mask, m.min_area, m.class_id, index)
            return frame, gt, ignore if ignore.any() else None
        if m.boxes is not None:
            return frame, m.boxes.get(number, []), None
        raise DatasetError(f"{m.name}: no ground truth source for evaluated frame {number}")


def load_sequence(manifest, input_size: tuple[int, int] | None = None, distractor: DistractorConfig | None = None,
                  noise: NoiseConfig | None = None) -> ManifestSequence:
    """Stream of ``SequenceItem`` for a manifest (object or JSON path).

    Frames are augmented at native resolution, then resized bilinearly to
    ``input_size = (height, width)``; boxes stay normalized.
    """
    if not isinstance(manifest, SequenceManifest):
        manifest = load_manifest(manifest)
    return ManifestSequence(manifest, input_size=input_size, distractor=distractor, noise=noise)
