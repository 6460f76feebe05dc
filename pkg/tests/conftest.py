from __future__ import annotations

import json

import numpy as np
import onnx
import pytest
from onnx import TensorProto, helper, numpy_helper

INPUT_SIZE = 96
NUM_BOXES = 5


def build_tiny_detector(path, size: int = INPUT_SIZE, k: int = NUM_BOXES, seed: int = 0) -> None:
    """Random-weight SSD-shaped graph: 4 conv stages, a skip from stage 2 into the head."""
    rng = np.random.default_rng(seed)
    inits, nodes = [], []

    def weight(name, arr):
        inits.append(numpy_helper.from_array(arr.astype(np.float32), name))

    chans = [3, 8, 16, 16, 32]
    prev = "image"
    for i in range(1, 5):
        weight(f"w{i}", rng.normal(0, 0.5, (chans[i], chans[i - 1], 3, 3)))
        weight(f"b{i}", rng.normal(0, 0.1, (chans[i],)))
        nodes.append(helper.make_node("Conv", [prev, f"w{i}", f"b{i}"], [f"c{i}"], name=f"conv{i}",
                                      strides=[2, 2], pads=[1, 1, 1, 1]))
        nodes.append(helper.make_node("Relu", [f"c{i}"], [f"t{i}"], name=f"relu{i}"))
        prev = f"t{i}"
    nodes += [
        helper.make_node("GlobalAveragePool", ["t4"], ["g4"], name="gap4"),
        helper.make_node("GlobalAveragePool", ["t2"], ["g2"], name="gap2"),
        helper.make_node("Flatten", ["g4"], ["f4"], name="flat4"),
        helper.make_node("Flatten", ["g2"], ["f2"], name="flat2"),
        helper.make_node("Concat", ["f4", "f2"], ["feat"], name="concat", axis=1),
    ]
    weight("wb", rng.normal(0, 1, (48, 4 * k)))
    weight("bb", np.zeros(4 * k))
    weight("ws", rng.normal(0, 1, (48, k)))
    weight("bs", np.zeros(k))
    inits.append(numpy_helper.from_array(np.array([1, k, 4], dtype=np.int64), "shape"))
    inits.append(numpy_helper.from_array(np.ones((1, k), dtype=np.float32), "cls"))
    nodes += [
        helper.make_node("Gemm", ["feat", "wb", "bb"], ["rb"], name="box_fc"),
        helper.make_node("Sigmoid", ["rb"], ["sb"], name="box_sig"),
        helper.make_node("Reshape", ["sb", "shape"], ["detection_boxes"], name="box_reshape"),
        helper.make_node("Gemm", ["feat", "ws", "bs"], ["rs"], name="score_fc"),
        helper.make_node("Sigmoid", ["rs"], ["detection_scores"], name="score_sig"),
        helper.make_node("Identity", ["cls"], ["detection_classes"], name="cls_id"),
    ]
    graph = helper.make_graph(
        nodes, "tiny_ssd",
        [helper.make_tensor_value_info("image", TensorProto.FLOAT, [1, 3, size, size])],
        [helper.make_tensor_value_info("detection_boxes", TensorProto.FLOAT, [1, k, 4]),
         helper.make_tensor_value_info("detection_scores", TensorProto.FLOAT, [1, k]),
         helper.make_tensor_value_info("detection_classes", TensorProto.FLOAT, [1, k])],
        inits,
    )
    model = helper.make_model(graph, opset_imports=[helper.make_opsetid("", 13)])
    model.ir_version = 8
    onnx.checker.check_model(model)
    onnx.save(model, str(path))


def tiny_node_map(model_name: str = "tiny.onnx") -> dict:
    return {
        "model": model_name,
        "input": {"name": "image", "height": INPUT_SIZE, "width": INPUT_SIZE, "layout": "NCHW",
                  "scale": 1 / 255.0},
        "layers": {"1": "t1", "2": "t2", "3": "t3", "4": "t4"},
        "outputs": {"boxes": "detection_boxes", "scores": "detection_scores",
                    "classes": "detection_classes", "box_order": "xyxy"},
        "score_threshold": 0.0,
    }


@pytest.fixture(scope="session")
def tiny_model(tmp_path_factory):
    """(model path, node map path) for the random-weight test graph."""
    d = tmp_path_factory.mktemp("onnx")
    build_tiny_detector(d / "tiny.onnx")
    (d / "nodes.json").write_text(json.dumps(tiny_node_map()))
    return d / "tiny.onnx", d / "nodes.json"


# one line per acceptance criterion at the end of the run
_criteria: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    number, title = marker
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        prev = _criteria.get(number)
        # several tests may cover one criterion: FAIL beats PASS beats SKIP
        rank = {"SKIP": 0, "PASS": 1, "FAIL": 2}
        if prev is None:
            _criteria[number] = (outcome, title)
        elif rank[outcome] > rank[prev[0]]:
            _criteria[number] = (outcome, prev[1])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        report.criterion = (marker.args[0], marker.kwargs.get("title", item.name))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        outcome, title = _criteria[number]
        terminalreporter.write_line(f"criterion {number:>2}: {outcome}  {title}")
