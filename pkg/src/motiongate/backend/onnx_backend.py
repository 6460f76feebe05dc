"""ONNX detector cut into an extractor prefix and a head at a named tensor.

The node map is a JSON file that tells the adapter how to feed the graph and
which tensor is "layer m"::

    {
      "model": "ssd.onnx",
      "input": {"name": "image", "height": 300, "width": 300, "layout": "NCHW",
                "dtype": "float32", "scale": 0.00784313725490196,
                "mean": [1.0, 1.0, 1.0], "std": [1.0, 1.0, 1.0]},
      "feature_layout": "NCHW",
      "layers": {"1": "block_1/relu", "2": "block_2/relu", "...": "..."},
      "outputs": {"boxes": "detection_boxes", "scores": "detection_scores",
                  "classes": "detection_classes", "num_detections": null,
                  "box_order": "yxyx"},
      "score_threshold": 0.3,
      "class_offset": 0
    }

Preprocessing is ``(pixel * scale - mean) / std``.  The head sub-graph is fed
every tensor it needs from the prefix (the tap itself plus any skip
connections that leave the prefix), so no prefix node ever runs twice.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
import onnx
import onnxruntime as ort
from onnx.utils import Extractor

from ..core import Detection, FeatureMap, NormalizedBox
from ..errors import BackendError, CapabilityError
from .base import SplitDetectorSpec, as_frame, check_layer

log = logging.getLogger(__name__)

_PROVIDERS = ["CPUExecutionProvider"]


def read_node_map(node_map) -> tuple[dict, Path | None]:
    if isinstance(node_map, dict):
        return node_map, None
    path = Path(node_map)
    if not path.is_file():
        raise FileNotFoundError(f"node map not found: {path}")
    with open(path) as fh:
        return json.load(fh), path.parent


def _session(model: onnx.ModelProto) -> ort.InferenceSession:
    return ort.InferenceSession(model.SerializeToString(), providers=_PROVIDERS)


class OnnxSplitDetector:
    """Split execution of an ONNX detection graph.

    ``prefix_runs`` / ``head_runs`` / ``full_runs`` count session executions;
    ``prefix_nodes`` and ``head_nodes`` list the node names on each side of
    the cut (they are disjoint by construction).
    """

    def __init__(self, model_path, node_map, split_index: int):
        cfg, base_dir = read_node_map(node_map)
        self.config = cfg
        model_path = Path(model_path) if model_path is not None else None
        if model_path is None:
            if "model" not in cfg:
                raise CapabilityError("no model path given and node map has no 'model' entry")
            model_path = Path(cfg["model"])
            if base_dir is not None and not model_path.is_absolute():
                model_path = base_dir / model_path
        if not model_path.is_file():
            raise FileNotFoundError(f"model file not found: {model_path}")
        try:
            model = onnx.load(str(model_path))
        except Exception as exc:
            raise BackendError("load", f"cannot parse {model_path}: {exc}") from exc
        self.model_path = model_path

        layers = {int(k): v for k, v in cfg.get("layers", {}).items()}
        if not layers:
            raise CapabilityError("node map declares no layers")
        layer_count = max(layers)
        check_layer(split_index, layer_count)
        if split_index not in layers:
            raise CapabilityError(f"node map has no tap point for layer {split_index}")
        self.tap = layers[split_index]

        inp = cfg.get("input", {})
        self.input_name = inp.get("name")
        self.input_height = int(inp["height"])
        self.input_width = int(inp["width"])
        self.input_layout = inp.get("layout", "NCHW").upper()
        self.input_dtype = np.dtype(inp.get("dtype", "float32"))
        self.scale = float(inp.get("scale", 1.0))
        self.mean = np.asarray(inp.get("mean", [0.0, 0.0, 0.0]), dtype=np.float32)
        self.std = np.asarray(inp.get("std", [1.0, 1.0, 1.0]), dtype=np.float32)
        self.feature_layout = cfg.get("feature_layout", "NCHW").upper()

        outs = cfg.get("outputs", {})
        self.out_boxes = outs.get("boxes", "detection_boxes")
        self.out_scores = outs.get("scores", "detection_scores")
        self.out_classes = outs.get("classes", "detection_classes")
        self.out_num = outs.get("num_detections")
        self.box_order = outs.get("box_order", "xyxy")
        self.score_threshold = float(cfg.get("score_threshold", 0.0))
        self.class_offset = int(cfg.get("class_offset", 0))

        self._split(model)

        self.prefix_runs = 0
        self.head_runs = 0
        self.full_runs = 0
        grid = self._probe_grid()
        self.spec = SplitDetectorSpec(
            layer_count=layer_count,
            split_index=split_index,
            input_height=self.input_height,
            input_width=self.input_width,
            grid_height=grid[0],
            grid_width=grid[1],
            grid_channels=grid[2],
        )
        log.info("split %s at %r: grid %s, %d prefix / %d head nodes",
                 model_path.name, self.tap, grid, len(self.prefix_nodes), len(self.head_nodes))

    def _split(self, model: onnx.ModelProto) -> None:
        graph = model.graph
        initializers = {t.name for t in graph.initializer}
        graph_inputs = [i.name for i in graph.input if i.name not in initializers]
        if self.input_name is None:
            self.input_name = graph_inputs[0]
        if self.input_name not in graph_inputs:
            raise CapabilityError(f"graph has no input named {self.input_name!r}")
        outputs = [self.out_boxes, self.out_scores, self.out_classes]
        if self.out_num:
            outputs.append(self.out_num)
        graph_outputs = {o.name for o in graph.output}
        missing = [o for o in outputs if o not in graph_outputs]
        if missing:
            raise CapabilityError(f"graph lacks detection outputs: {', '.join(missing)}")

        producer = {}
        for idx, node in enumerate(graph.node):
            for name in node.output:
                if name:
                    producer[name] = idx
        if self.tap not in producer:
            raise CapabilityError(f"graph has no intermediate tensor {self.tap!r} to tap")

        def ancestors(start: str) -> set[int]:
            seen, stack = set(), [start]
            while stack:
                name = stack.pop()
                idx = producer.get(name)
                if idx is None or idx in seen:
                    continue
                seen.add(idx)
                stack.extend(n for n in graph.node[idx].input if n)
            return seen

        prefix = ancestors(self.tap)
        frontier: list[str] = []
        head, stack = set(), list(outputs)
        while stack:
            name = stack.pop()
            if name in initializers:
                continue
            idx = producer.get(name)
            if idx is None or idx in prefix:
                if name not in frontier:
                    frontier.append(name)
                continue
            if idx in head:
                continue
            head.add(idx)
            stack.extend(n for n in graph.node[idx].input if n)
        if self.tap in frontier:
            frontier.remove(self.tap)
        frontier.insert(0, self.tap)

        try:
            inferred = onnx.shape_inference.infer_shapes(model)
            extractor = Extractor(inferred)
            prefix_out = [n for n in frontier if n in producer and producer[n] in prefix]
            prefix_model = extractor.extract_model([self.input_name], prefix_out)
            head_model = extractor.extract_model(frontier, outputs)
        except ValueError as exc:
            raise CapabilityError(f"cannot introspect tensors around {self.tap!r}: {exc}") from exc

        self.frontier = frontier
        self.outputs = outputs
        self.prefix_outputs = prefix_out
        self.prefix_nodes = [n.name or f"#{i}" for i, n in enumerate(graph.node) if i in prefix]
        self.head_nodes = [n.name or f"#{i}" for i, n in enumerate(graph.node) if i in head]
        self._prefix = _session(prefix_model)
        self._head = _session(head_model)
        self._full = _session(model)

    def _probe_grid(self) -> tuple[int, int, int]:
        blank = np.zeros((self.input_height, self.input_width, 3), dtype=np.uint8)
        tap = self._prefix.run([self.tap], {self.input_name: self.preprocess(blank)})[0]
        if tap.ndim != 4 or tap.shape[0] != 1:
            raise CapabilityError(f"tap {self.tap!r} has shape {tap.shape}, expected a batch-1 4-D tensor")
        return self._to_hwc(tap).shape

    def _to_hwc(self, tensor: np.ndarray) -> np.ndarray:
        t = tensor[0]
        return np.transpose(t, (1, 2, 0)) if self.feature_layout == "NCHW" else t

    def preprocess(self, frame: np.ndarray) -> np.ndarray:
        frame = as_frame(frame, self.input_height, self.input_width)
        if self.input_dtype == np.uint8:
            x = frame.astype(np.uint8)
        else:
            x = ((frame.astype(np.float32) * self.scale - self.mean) / self.std).astype(self.input_dtype)
        if self.input_layout == "NCHW":
            x = np.transpose(x, (2, 0, 1))
        return x[None]

    def extract_features(self, frame: np.ndarray) -> FeatureMap:
        x = self.preprocess(frame)
        try:
            values = self._prefix.run(self.prefix_outputs, {self.input_name: x})
        except Exception as exc:
            raise BackendError("extract", str(exc)) from exc
        self.prefix_runs += 1
        cache = dict(zip(self.prefix_outputs, values))
        if self.input_name in self.frontier:
            cache[self.input_name] = x
        return FeatureMap(self._to_hwc(cache[self.tap]), activations=cache)

    def head_outputs(self, features: FeatureMap) -> list[np.ndarray]:
        """Raw detection tensors from the head sub-graph fed with cached prefix tensors."""
        missing = [n for n in self.frontier if n not in features.activations]
        if missing:
            raise BackendError("head", f"features lack cached tensors {missing}; were they produced by this backend?")
        try:
            raw = self._head.run(self.outputs, {n: features.activations[n] for n in self.frontier})
        except Exception as exc:
            raise BackendError("head", str(exc)) from exc
        self.head_runs += 1
        return raw

    def full_outputs(self, frame: np.ndarray) -> list[np.ndarray]:
        """Raw detection tensors from the original, unsplit graph."""
        try:
            raw = self._full.run(self.outputs, {self.input_name: self.preprocess(frame)})
        except Exception as exc:
            raise BackendError("detect", str(exc)) from exc
        self.full_runs += 1
        return raw

    def run_head(self, frame: np.ndarray, features: FeatureMap) -> list[Detection]:
        return self.decode(self.head_outputs(features))

    def detect(self, frame: np.ndarray) -> list[Detection]:
        """Unsplit end-to-end run of the original graph."""
        return self.decode(self.full_outputs(frame))

    def decode(self, raw: list[np.ndarray]) -> list[Detection]:
        boxes = np.asarray(raw[0]).reshape(-1, 4)
        scores = np.asarray(raw[1]).reshape(-1)
        classes = np.asarray(raw[2]).reshape(-1)
        n = len(scores)
        if self.out_num:
            n = min(n, int(np.asarray(raw[3]).reshape(-1)[0]))
        dets = []
        for i in range(n):
            score = float(scores[i])
            if score < self.score_threshold:
                continue
            a, b, c, d = (float(v) for v in boxes[i])
            if self.box_order == "yxyx":
                a, b, c, d = b, a, d, c
            left, right = sorted((min(max(a, 0.0), 1.0), min(max(c, 0.0), 1.0)))
            top, bottom = sorted((min(max(b, 0.0), 1.0), min(max(d, 0.0), 1.0)))
            if right <= left or bottom <= top:
                continue
            dets.append(Detection(NormalizedBox(left, top, right, bottom),
                                  int(round(float(classes[i]))) + self.class_offset,
                                  min(max(score, 0.0), 1.0)))
        return dets


