from __future__ import annotations

import pytest

from motiongate import config as cfgmod
from motiongate import experiments


def noisy_config(**extra):
    data = {"gate": {"m": 6},
            "dataset": {"synthetic": {"n_frames": 60, "blob_frames": [20, 40], "blob_end": [200, 200],
                                      "distractor_detection_score": 0.95}},
            "augment": {"noise": {"mu": 0.8, "sigma": 0.2}},
            "eval": {"warmup_frames": 2}}
    data.update(extra)
    return cfgmod.validate(cfgmod.load_config(None, data))


def test_feature_peak_not_below_pixel_peak():
    result = experiments.compare_baseline(noisy_config(), [0.1, 0.2, 0.3, 0.4], [250, 500, 1000, 2000, 4000],
                                          serial=True)
    feature, pixel = result["peak_feature"], result["peak_pixel"]
    assert result["failed"] == 0
    assert feature.map >= pixel.map
    assert feature.map == pytest.approx(1.0)


def test_grid_search_selection():
    result = experiments.grid_search(noisy_config(), [5, 6], [0.0, 0.1], serial=True)
    assert len(result["cells"]) == 4 and result["failed"] == 0
    best = result["best_by_map"]
    assert best.map == max(c.map for c in result["cells"])
    ratio = result["best_by_map_per_ms"]
    assert ratio.map / ratio.mean_frame_us == max(c.map / c.mean_frame_us for c in result["cells"])


def test_single_cell_grid(tmp_path):
    result = experiments.grid_search(noisy_config(), [6], [0.3], serial=True)
    experiments.write_grid(result, tmp_path)
    lines = (tmp_path / "map_heatmap.csv").read_text().splitlines()
    assert lines[0] == "m\\lambda,0.3" and lines[1].startswith("6,")
    assert len(lines) == 2


def test_failed_cell_recorded(monkeypatch):
    def boom(cfg):
        raise RuntimeError("no")

    monkeypatch.setattr(experiments, "run_experiment", boom)
    result = experiments.grid_search(noisy_config(), [6], [0.3], serial=True)
    assert result["failed"] == 1 and result["best_by_map"] is None
    assert "RuntimeError" in result["cells"][0].error


def test_cells_carry_config_hash():
    result = experiments.grid_search(noisy_config(), [6], [0.1, 0.3], serial=True)
    hashes = {c.config_hash for c in result["cells"]}
    assert len(hashes) == 2 and all(len(h) == 12 for h in hashes)


def test_empty_lists_rejected():
    with pytest.raises(ValueError):
        experiments.compare_baseline(noisy_config(), [0.1], [])
