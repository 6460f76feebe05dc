"""Sequence loading, ground-truth boxes and the evaluation augmentations."""

from .augment import DistractorConfig, NoiseConfig, apply_noise, augment_frame, overlay_distractor
from .sequence import (
    ArraySequence,
    ManifestSequence,
    Sequence,
    SequenceItem,
    SequenceManifest,
    cdnet_manifest,
    load_manifest,
    load_sequence,
    masks_to_boxes,
)
from .synthetic import SyntheticScene

__all__ = [
    "ArraySequence",
    "DistractorConfig",
    "ManifestSequence",
    "NoiseConfig",
    "Sequence",
    "SequenceItem",
    "SequenceManifest",
    "SyntheticScene",
    "apply_noise",
    "augment_frame",
    "cdnet_manifest",
    "load_manifest",
    "load_sequence",
    "masks_to_boxes",
    "overlay_distractor",
]
