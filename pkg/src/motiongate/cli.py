"""Command-line entry point: run, grid-search, compare-baseline, augment.

Exit codes: 0 success, 1 configuration error, 2 runtime error, 3 some grid
cells failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import cv2
import numpy as np

from . import config as cfgmod
from . import experiments
from .errors import ConfigError, LayerRangeError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_PARTIAL = 0, 1, 2, 3

log = logging.getLogger("motiongate")


def parse_floats(text: str) -> list[float]:
    """``"0,0.5,1"`` or ``"start:stop:step"`` (stop inclusive)."""
    text = text.strip()
    if not text:
        return []
    if ":" in text:
        start, stop, step = (float(v) for v in text.split(":"))
        if step <= 0:
            raise argparse.ArgumentTypeError(f"step must be positive in {text!r}")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 10) for i in range(max(n, 0))]
    return [float(v) for v in text.split(",") if v.strip()]


def parse_ints(text: str) -> list[int]:
    """``"1-11"`` or ``"1,5,11"``."""
    text = text.strip()
    if "-" in text and "," not in text:
        lo, hi = (int(v) for v in text.split("-"))
        return list(range(lo, hi + 1))
    return [int(v) for v in text.split(",") if v.strip()]


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--backend", choices=["mock", "external"])
    p.add_argument("--model", help="ONNX model file (external backend)")
    p.add_argument("--node-map", help="JSON node map: layer -> tensor name, input size, normalization")
    p.add_argument("--manifest", action="append", help="sequence manifest JSON (repeatable)")
    p.add_argument("--cdnet", action="append", help="CDNet video directory (repeatable)")
    p.add_argument("--m", type=int, help="split layer")
    p.add_argument("--lambda-gate", type=float)
    p.add_argument("--lambda-filter", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--serial-timing", action="store_true", default=None,
                   help="run cells one at a time so timings are not skewed by contention")
    p.add_argument("--workers", type=int, help="worker processes for multi-cell commands")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="motiongate", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="measure one configuration")
    _common(run)
    run.add_argument("--method", choices=["feature", "pixel"])
    run.add_argument("--threshold", type=float, help="pixel baseline threshold")
    run.add_argument("--no-gating", action="store_true", help="run the head on every frame")
    run.add_argument("--no-filtering", action="store_true", help="keep every head detection")
    run.add_argument("--reference-frame", type=int, help="frame index that initializes the background")

    grid = sub.add_parser("grid-search", help="MAP and frame time over an m x lambda grid")
    _common(grid)
    grid.add_argument("--m-range", default="1-11", help="e.g. 1-11 or 3,5,11")
    grid.add_argument("--lambdas", default="0:1:0.1", help="e.g. 0:1:0.1 or 0.2,0.4")

    cmp_ = sub.add_parser("compare-baseline", help="feature gate vs pixel L2 gate")
    _common(cmp_)
    cmp_.add_argument("--lambdas", default="0:1:0.1")
    cmp_.add_argument("--thresholds", default="0,500,1000,1500,2000,2500")

    aug = sub.add_parser("augment", help="write the augmented sequences to disk")
    _common(aug)
    return parser


def overrides_from(args) -> dict:
    o: dict = {}

    def put(path: str, value):
        if value is None:
            return
        node = o
        *parents, leaf = path.split(".")
        for key in parents:
            node = node.setdefault(key, {})
        node[leaf] = value

    put("backend.type", args.backend)
    put("backend.model", args.model)
    put("backend.node_map", args.node_map)
    if args.model or args.node_map:
        put("backend.type", args.backend or "external")
    put("dataset.manifests", args.manifest)
    put("dataset.cdnet", args.cdnet)
    put("gate.m", args.m)
    put("gate.lambda_gate", args.lambda_gate)
    put("gate.lambda_filter", args.lambda_filter)
    put("gate.alpha", args.alpha)
    put("seed", args.seed)
    put("output", args.out)
    put("serial_timing", args.serial_timing)
    put("method", getattr(args, "method", None))
    put("baseline.threshold", getattr(args, "threshold", None))
    put("eval.reference_frame", getattr(args, "reference_frame", None))
    if getattr(args, "no_gating", False):
        put("gate.gating", False)
    if getattr(args, "no_filtering", False):
        put("gate.filtering", False)
    return o


def cmd_run(cfg: dict, args) -> int:
    report, records = experiments.run_experiment(cfg)
    out = Path(cfg["output"])
    experiments.write_run(report, records, out)
    print(f"MAP {report.map}  mean frame {report.mean_frame_us:.1f} us  "
          f"head fraction {report.head_invocation_fraction:.3f}  -> {out}")
    return EXIT_OK


def cmd_grid_search(cfg: dict, args) -> int:
    ms = parse_ints(args.m_range)
    lambdas = parse_floats(args.lambdas)
    if not ms or not lambdas:
        raise ConfigError("grid", "empty m range or lambda list")
    bad = [lam for lam in lambdas if not 0.0 <= lam <= 1.0]
    if bad:
        raise ConfigError("lambdas", f"values outside [0, 1]: {bad}")
    layer_count = cfgmod.build_backend(dict(cfg, gate=dict(cfg["gate"], m=1))).spec.layer_count
    out_of_range = [m for m in ms if not 1 <= m <= layer_count]
    if out_of_range:
        raise ConfigError("m_range", f"layers {out_of_range} outside [1, {layer_count}]")
    result = experiments.grid_search(cfg, ms, lambdas, args.workers, cfg["serial_timing"])
    out = Path(cfg["output"])
    experiments.write_grid(result, out)
    best = result["best_by_map"]
    if best is not None:
        print(f"best MAP {best.map} at m={best.m}, lambda={best.param}  -> {out}")
    if result["failed"]:
        print(f"{result['failed']} cell(s) failed; see {out / 'cells.csv'}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_compare(cfg: dict, args) -> int:
    lambdas = parse_floats(args.lambdas)
    thresholds = parse_floats(args.thresholds)
    if not thresholds:
        raise ConfigError("thresholds", "baseline threshold list is empty")
    if not lambdas:
        raise ConfigError("lambdas", "lambda list is empty")
    if any(t < 0 for t in thresholds):
        raise ConfigError("thresholds", "baseline thresholds must be >= 0")
    result = experiments.compare_baseline(cfg, lambdas, thresholds, args.workers, cfg["serial_timing"])
    out = Path(cfg["output"])
    experiments.write_comparison(result, out)
    for key in ("peak_feature", "peak_pixel"):
        c = result[key]
        if c is not None:
            print(f"{key}: MAP {c.map} at {c.param}")
    return EXIT_PARTIAL if result["failed"] else EXIT_OK


def cmd_augment(cfg: dict, args) -> int:
    """Materialize every configured sequence as PNG frames plus a loadable manifest."""
    backend = cfgmod.build_backend(cfg)
    seqs = cfgmod.build_sequences(cfg, (backend.spec.input_height, backend.spec.input_width))
    out = Path(cfg["output"])
    for seq in seqs:
        d = out / seq.name
        (d / "frames").mkdir(parents=True, exist_ok=True)
        boxes, evaluated = {}, []
        for item in seq:
            cv2.imwrite(str(d / "frames" / f"frame{item.index + 1:06d}.png"),
                        cv2.cvtColor(item.frame, cv2.COLOR_RGB2BGR))
            if item.evaluated:
                evaluated.append(item.index + 1)
                boxes[str(item.index + 1)] = [list(g.box.as_tuple()) + [g.class_id] for g in item.ground_truth]
        (d / "boxes.json").write_text(json.dumps(boxes))
        manifest = {"name": seq.name, "frames_dir": "frames", "frames_glob": "frame*.png",
                    "boxes_file": "boxes.json"}
        if evaluated:
            manifest["temporal_roi"] = [min(evaluated), max(evaluated)]
        (d / "manifest.json").write_text(json.dumps(manifest, indent=2))
        print(f"{seq.name}: {len(seq)} frames -> {d}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "grid-search": cmd_grid_search, "compare-baseline": cmd_compare,
            "augment": cmd_augment}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = cfgmod.validate(cfgmod.load_config(args.config, overrides_from(args)))
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, LayerRangeError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        if args.verbose:
            log.exception("run failed")
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
