"""Detector backends split into an extractor prefix and a detection head."""

from .base import SplitDetector, SplitDetectorSpec, as_frame, check_layer
from .mock import MockBackend, MockConfig


def load_external_model(path, node_map, split_index: int):
    """Open an ONNX detector cut at layer ``split_index`` (see ``onnx_backend``)."""
    from .onnx_backend import OnnxSplitDetector

    return OnnxSplitDetector(path, node_map, split_index)


__all__ = [
    "MockBackend",
    "MockConfig",
    "SplitDetector",
    "SplitDetectorSpec",
    "as_frame",
    "check_layer",
    "load_external_model",
]
