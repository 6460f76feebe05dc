"""Exception types shared across the package."""

from __future__ import annotations


class MotionGateError(Exception):
    """Base class for all errors raised by motiongate."""


class ShapeError(MotionGateError, ValueError):
    """Array dimensions do not match what an operation requires."""


class LayerRangeError(MotionGateError, ValueError):
    """Requested split layer is outside the backend's declared layer count."""


class CapabilityError(MotionGateError):
    """A model graph cannot provide something the split contract needs."""


class BackendError(MotionGateError, RuntimeError):
    """Failure inside a detector backend, tagged with the pipeline stage."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class PipelineError(MotionGateError, RuntimeError):
    """Failure while streaming a sequence, tagged with the frame index."""

    def __init__(self, sequence: str, frame_index: int, message: str):
        super().__init__(f"sequence {sequence!r}, frame {frame_index}: {message}")
        self.sequence = sequence
        self.frame_index = frame_index


class ConfigError(MotionGateError, ValueError):
    """Invalid run configuration; ``field`` is a dotted path into the config."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class DatasetError(MotionGateError):
    """Unreadable frame, missing ground truth, or malformed manifest."""
