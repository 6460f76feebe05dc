"""Single runs, m x lambda grid searches and baseline comparisons."""

from __future__ import annotations

import copy
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import config as cfgmod
from .evaluation.measure import EvalReport, config_hash, csv_text, measure_pipeline

log = logging.getLogger(__name__)


def run_experiment(cfg: dict):
    """Build everything a config describes and measure it once."""
    backend = cfgmod.build_backend(cfg)
    seqs = cfgmod.build_sequences(cfg, (backend.spec.input_height, backend.spec.input_width))
    ev = cfg["eval"]
    return measure_pipeline(
        seqs,
        cfgmod.detector_factory(cfg, backend),
        iou_threshold=ev["iou_threshold"],
        interpolation=ev["interpolation"],
        classes=ev["classes"],
        warmup_frames=ev["warmup_frames"],
        reference_frame=ev["reference_frame"],
        config=cfgmod.echo(cfg),
    )


def write_run(report: EvalReport, records, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json())
    (out_dir / "report.csv").write_text(csv_text([report.csv_row()]))
    (out_dir / "trace.csv").write_text(csv_text([r.trace_row() for r in records]))


def with_feature_gate(cfg: dict, m: int | None = None, lam: float | None = None) -> dict:
    cell = copy.deepcopy(cfg)
    cell["method"] = "feature"
    if m is not None:
        cell["gate"]["m"] = m
    if lam is not None:
        cell["gate"]["lambda_gate"] = lam
        cell["gate"]["lambda_filter"] = None
    return cell


def with_pixel_gate(cfg: dict, threshold: float) -> dict:
    cell = copy.deepcopy(cfg)
    cell["method"] = "pixel"
    cell["baseline"]["threshold"] = threshold
    return cell


@dataclass
class CellResult:
    m: int | None
    param: float
    method: str
    map: float | None = None
    mean_frame_us: float | None = None
    median_frame_us: float | None = None
    head_invocation_fraction: float | None = None
    config_hash: str = ""
    error: str | None = None

    def row(self) -> dict:
        return {k: ("" if v is None else v) for k, v in self.__dict__.items()}


def _run_cell(payload) -> CellResult:
    cell_cfg, m, param, method = payload
    result = CellResult(m, param, method, config_hash=config_hash(cfgmod.echo(cell_cfg)))
    try:
        report, _ = run_experiment(cell_cfg)
    except Exception as exc:  # recorded per cell; the search carries on
        log.warning("cell m=%s %s=%s failed: %s", m, method, param, exc)
        result.error = f"{type(exc).__name__}: {exc}"
        return result
    result.map = report.map
    result.mean_frame_us = report.mean_frame_us
    result.median_frame_us = report.median_frame_us
    result.head_invocation_fraction = report.head_invocation_fraction
    return result


def run_cells(payloads: list, workers: int | None = None, serial: bool = False) -> list[CellResult]:
    workers = workers or min(len(payloads), len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity")
                             else os.cpu_count() or 1)
    if serial or workers <= 1 or len(payloads) <= 1:
        return [_run_cell(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell, payloads))


def _ratio(c: CellResult) -> float:
    if c.map is None or not c.mean_frame_us:
        return float("-inf")
    return c.map / (c.mean_frame_us / 1000.0)


def grid_search(cfg: dict, ms: list[int], lambdas: list[float], workers: int | None = None,
                serial: bool = False) -> dict:
    payloads = [(with_feature_gate(cfg, m, lam), m, lam, "feature") for m in ms for lam in lambdas]
    cells = run_cells(payloads, workers, serial)
    ok = [c for c in cells if c.error is None and c.map is not None]
    best_map = max(ok, key=lambda c: c.map, default=None)
    best_ratio = max(ok, key=_ratio, default=None)
    return {
        "ms": ms,
        "lambdas": lambdas,
        "cells": cells,
        "best_by_map": best_map,
        "best_by_map_per_ms": best_ratio,
        "failed": sum(c.error is not None for c in cells),
    }


def _matrix_csv(ms, lambdas, cells, attr: str) -> str:
    lookup = {(c.m, c.param): getattr(c, attr) for c in cells}
    lines = ["m\\lambda," + ",".join(f"{lam:g}" for lam in lambdas)]
    for m in ms:
        values = [lookup.get((m, lam)) for lam in lambdas]
        lines.append(f"{m}," + ",".join("" if v is None else repr(float(v)) for v in values))
    return "\n".join(lines) + "\n"


def _summary_cell(c: CellResult | None):
    if c is None:
        return None
    return {"m": c.m, "lambda": c.param, "map": c.map, "mean_frame_us": c.mean_frame_us,
            "config_hash": c.config_hash}


def write_grid(result: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    ms, lambdas, cells = result["ms"], result["lambdas"], result["cells"]
    (out_dir / "map_heatmap.csv").write_text(_matrix_csv(ms, lambdas, cells, "map"))
    (out_dir / "time_heatmap.csv").write_text(_matrix_csv(ms, lambdas, cells, "mean_frame_us"))
    (out_dir / "cells.csv").write_text(csv_text([c.row() for c in cells]))
    summary = {
        "best_by_map": _summary_cell(result["best_by_map"]),
        "best_by_map_per_ms": _summary_cell(result["best_by_map_per_ms"]),
        "failed_cells": result["failed"],
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    _heatmap_svg(ms, lambdas, cells, out_dir / "heatmap.svg")


def _heatmap_svg(ms, lambdas, cells, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np

    lookup = {(c.m, c.param): c for c in cells}
    fig, axes = plt.subplots(1, 2, figsize=(4 + 0.5 * len(lambdas) * 2, 2 + 0.4 * len(ms)))
    for ax, attr, title in zip(axes, ("map", "mean_frame_us"), ("MAP", "mean frame time, us")):
        grid = np.array([[np.nan if getattr(lookup[(m, lam)], attr) is None else getattr(lookup[(m, lam)], attr)
                          for lam in lambdas] for m in ms], dtype=float)
        im = ax.imshow(grid, aspect="auto", origin="lower", cmap="viridis")
        ax.set_xticks(range(len(lambdas)), [f"{lam:g}" for lam in lambdas], rotation=90)
        ax.set_yticks(range(len(ms)), [str(m) for m in ms])
        ax.set_xlabel("lambda")
        ax.set_ylabel("m")
        ax.set_title(title)
        fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def compare_baseline(cfg: dict, lambdas: list[float], thresholds: list[float], workers: int | None = None,
                     serial: bool = False) -> dict:
    """Feature gate over ``lambdas`` and pixel gate over ``thresholds`` on the same sequences."""
    if not thresholds:
        raise ValueError("baseline threshold list is empty")
    if not lambdas:
        raise ValueError("lambda list is empty")
    m = cfg["gate"]["m"]
    payloads = [(with_feature_gate(cfg, m, lam), m, lam, "feature") for lam in lambdas]
    payloads += [(with_pixel_gate(cfg, t), m, t, "pixel") for t in thresholds]
    cells = run_cells(payloads, workers, serial)

    def peak(method):
        ok = [c for c in cells if c.method == method and c.map is not None]
        return max(ok, key=lambda c: c.map, default=None)

    return {"cells": cells, "peak_feature": peak("feature"), "peak_pixel": peak("pixel"),
            "failed": sum(c.error is not None for c in cells)}


def write_comparison(result: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = result["cells"]
    (out_dir / "comparison.csv").write_text(csv_text([c.row() for c in cells]))
    summary = {}
    for key in ("peak_feature", "peak_pixel"):
        c = result[key]
        summary[key] = None if c is None else {"param": c.param, "map": c.map, "mean_frame_us": c.mean_frame_us,
                                               "config_hash": c.config_hash}
    summary["failed_cells"] = result["failed"]
    (out_dir / "comparison.json").write_text(json.dumps(summary, indent=2))
    _curves_svg(cells, out_dir / "comparison.svg")


def _curves_svg(cells, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(2, 2, figsize=(9, 6))
    for col, method, xlabel in ((0, "feature", "lambda (cosine)"), (1, "pixel", "threshold (pixel L2)")):
        pts = sorted((c.param, c) for c in cells if c.method == method and c.error is None)
        xs = [p for p, _ in pts]
        axes[0, col].plot(xs, [c.map if c.map is not None else float("nan") for _, c in pts], marker="o")
        axes[0, col].set_ylabel("MAP")
        axes[1, col].plot(xs, [c.mean_frame_us for _, c in pts], marker="o")
        axes[1, col].set_ylabel("mean frame time, us")
        axes[1, col].set_xlabel(xlabel)
        axes[0, col].set_title(method)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
