"""Run configuration: defaults, schema validation, and object construction."""

from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema

from .backend import MockBackend, MockConfig, load_external_model
from .baseline import PixelGatedDetector
from .core import GateConfig
from .dataset import (
    DistractorConfig,
    NoiseConfig,
    SyntheticScene,
    cdnet_manifest,
    load_manifest,
    load_sequence,
)
from .errors import ConfigError
from .evaluation.metrics import ALL_POINT, ELEVEN_POINT
from .pipeline import MotionGatedDetector

DEFAULTS: dict = {
    "backend": {"type": "mock", "mock": {}, "model": None, "node_map": None},
    "method": "feature",
    "gate": {"m": 11, "lambda_gate": 0.4, "lambda_filter": None, "alpha": 0.9, "gating": True, "filtering": True},
    "baseline": {"threshold": 500.0, "alpha": None},
    "dataset": {"manifests": [], "cdnet": [], "synthetic": None},
    "augment": {"noise": None, "distractor": None},
    "eval": {"iou_threshold": 0.5, "interpolation": ALL_POINT, "classes": [1], "warmup_frames": 10,
             "reference_frame": None},
    "seed": 0,
    "output": "results",
    "serial_timing": False,
}

_num = {"type": "number"}
_unit = {"type": "number", "minimum": 0, "maximum": 1}


def _opt(schema: dict) -> dict:
    return {"anyOf": [schema, {"type": "null"}]}


SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "backend": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "type": {"enum": ["mock", "external"]},
                "mock": {"type": "object"},
                "model": _opt({"type": "string"}),
                "node_map": _opt({"type": "string"}),
            },
        },
        "method": {"enum": ["feature", "pixel"]},
        "gate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "m": {"type": "integer", "minimum": 1},
                "lambda_gate": _unit,
                "lambda_filter": _opt(_unit),
                "alpha": _unit,
                "gating": {"type": "boolean"},
                "filtering": {"type": "boolean"},
            },
        },
        "baseline": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"threshold": {"type": "number", "minimum": 0}, "alpha": _opt(_unit)},
        },
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "manifests": {"type": "array", "items": {"type": "string"}},
                "cdnet": {"type": "array", "items": {"type": "string"}},
                "synthetic": _opt({"type": "object"}),
            },
        },
        "augment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "noise": _opt({
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"mu": _num, "sigma": {"type": "number", "minimum": 0}, "seed": {"type": "integer"}},
                }),
                "distractor": _opt({
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["patch", "placement"],
                    "properties": {
                        "patch": {"type": "string"},
                        "placement": {"type": "array", "items": _unit, "minItems": 4, "maxItems": 4},
                        "start": {"type": "integer", "minimum": 0},
                    },
                }),
            },
        },
        "eval": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "iou_threshold": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "interpolation": {"enum": [ALL_POINT, ELEVEN_POINT]},
                "classes": _opt({"type": "array", "items": {"type": "integer"}}),
                "warmup_frames": {"type": "integer", "minimum": 0},
                "reference_frame": _opt({"type": "integer", "minimum": 0}),
            },
        },
        "seed": {"type": "integer"},
        "output": {"type": "string"},
        "serial_timing": {"type": "boolean"},
    },
}


def merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and out[key]:
            out[key] = merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, then the JSON file, then ``overrides``; relative paths resolve against the file."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        path = Path(path)
        try:
            with open(path) as fh:
                data = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError("config", f"file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config", f"{path}: top level must be an object")
        _resolve_paths(data, path.parent)
        cfg = merge(cfg, data)
    if overrides:
        cfg = merge(cfg, overrides)
    return cfg


def _resolve_paths(data: dict, base: Path) -> None:
    def fix(p):
        return p if p is None or Path(p).is_absolute() else str(base / p)

    backend = data.get("backend", {})
    for key in ("model", "node_map"):
        if backend.get(key):
            backend[key] = fix(backend[key])
    ds = data.get("dataset", {})
    for key in ("manifests", "cdnet"):
        if ds.get(key):
            ds[key] = [fix(p) for p in ds[key]]
    dis = (data.get("augment") or {}).get("distractor")
    if dis and dis.get("patch"):
        dis["patch"] = fix(dis["patch"])
    if data.get("output"):
        data["output"] = fix(data["output"])


def validate(cfg: dict) -> dict:
    """Schema plus semantic checks; raises ``ConfigError`` naming the offending field."""
    errors = sorted(jsonschema.Draft7Validator(SCHEMA).iter_errors(cfg), key=lambda e: list(e.path))
    if errors:
        err = errors[0]
        raise ConfigError(".".join(str(p) for p in err.path) or "config", err.message)

    backend = cfg["backend"]
    if backend["type"] == "external":
        if not backend.get("node_map"):
            raise ConfigError("backend.node_map", "external backend needs a node map")
        if not Path(backend["node_map"]).is_file():
            raise ConfigError("backend.node_map", f"file not found: {backend['node_map']}")
        if backend.get("model") and not Path(backend["model"]).is_file():
            raise ConfigError("backend.model", f"file not found: {backend['model']}")
    else:
        try:
            MockConfig.from_dict(backend.get("mock") or {})
        except (TypeError, ValueError) as exc:
            raise ConfigError("backend.mock", str(exc)) from exc

    ds = cfg["dataset"]
    for key in ("manifests", "cdnet"):
        for i, p in enumerate(ds[key]):
            if not Path(p).exists():
                raise ConfigError(f"dataset.{key}.{i}", f"path not found: {p}")
    if not (ds["manifests"] or ds["cdnet"] or ds["synthetic"] is not None):
        raise ConfigError("dataset", "no sequences configured (manifests, cdnet or synthetic)")
    if ds["synthetic"] is not None:
        try:
            _scene(ds["synthetic"])
        except (TypeError, ValueError) as exc:
            raise ConfigError("dataset.synthetic", str(exc)) from exc
    dis = cfg["augment"]["distractor"]
    if dis and not Path(dis["patch"]).is_file():
        raise ConfigError("augment.distractor.patch", f"file not found: {dis['patch']}")
    if dis:
        try:
            DistractorConfig(dis["patch"], tuple(dis["placement"]), dis.get("start", 0))
        except ValueError as exc:
            raise ConfigError("augment.distractor.placement", str(exc)) from exc
    return cfg


def _scene(data: dict) -> SyntheticScene:
    extra = {"sequences", "distractor_detection_score"}
    return SyntheticScene.from_dict({k: v for k, v in data.items() if k not in extra})


def gate_config(cfg: dict) -> GateConfig:
    g = cfg["gate"]
    return GateConfig(g["m"], g["lambda_gate"], g["alpha"], g["lambda_filter"])


def build_backend(cfg: dict):
    backend = cfg["backend"]
    m = cfg["gate"]["m"]
    if backend["type"] == "external":
        return load_external_model(backend.get("model"), backend["node_map"], m)
    mock = dict(backend.get("mock") or {})
    mock["split_index"] = m
    syn = cfg["dataset"].get("synthetic")
    if syn and syn.get("distractor_detection_score") is not None:
        scene = _scene(syn)
        if scene.distractor_box is not None:
            det = scene.distractor_detection(float(syn["distractor_detection_score"]))
            mock["canned"] = list(mock.get("canned", [])) + [
                {"box": list(det.box.as_tuple()), "class_id": det.class_id, "score": det.score}]
    return MockBackend(MockConfig.from_dict(mock))


def build_sequences(cfg: dict, input_size: tuple[int, int]) -> list:
    aug = cfg["augment"]
    noise = None
    if aug["noise"] is not None:
        noise = NoiseConfig(**{"seed": cfg["seed"], **aug["noise"]})
    distractor = None
    if aug["distractor"]:
        d = aug["distractor"]
        distractor = DistractorConfig(d["patch"], tuple(d["placement"]), d.get("start", 0))

    seqs = []
    ds = cfg["dataset"]
    for p in ds["manifests"]:
        seqs.append(load_sequence(load_manifest(p), input_size, distractor, noise))
    for p in ds["cdnet"]:
        seqs.append(load_sequence(cdnet_manifest(p), input_size, distractor, noise))
    if ds["synthetic"] is not None:
        scene = _scene(ds["synthetic"])
        # seqs share the scene; noise seeds differ so videos are not copies of each other
        for i in range(int(ds["synthetic"].get("sequences", 1))):
            seq = scene.build(name=f"synthetic{i}", input_size=input_size)
            if noise is not None:
                seq.noise = NoiseConfig(noise.mu, noise.sigma, noise.seed + i)
            if distractor is not None:
                seq.distractor = distractor
            seqs.append(seq)
    return seqs


def detector_factory(cfg: dict, backend):
    """Zero-argument callable producing a fresh per-stream detector."""
    g = cfg["gate"]
    if cfg["method"] == "pixel":
        b = cfg["baseline"]
        alpha = g["alpha"] if b.get("alpha") is None else b["alpha"]
        return lambda: PixelGatedDetector(backend, b["threshold"], alpha, filtering=g["filtering"])
    gate = gate_config(cfg)
    return lambda: MotionGatedDetector(backend, gate, gating=g["gating"], filtering=g["filtering"])


def echo(cfg: dict) -> dict:
    """The parts of a config that determine results (paths, output dir and flags dropped)."""
    out = {k: copy.deepcopy(cfg[k]) for k in ("backend", "method", "gate", "dataset", "augment", "eval", "seed")}
    if out["method"] == "feature":
        out.pop("baseline", None)
    else:
        out["baseline"] = copy.deepcopy(cfg["baseline"])
    return out
