import pandas as pd
import pytest

from src.eval.metrics import (association_accuracy, evaluate, frame_intervals, gap_histogram, histogram_frame,
                              id_switches, idf1, metrics_report, plot_gap_histogram)
from src.problem.detection import Detection, frames_to_trajectories
from src.problem.geometry import BBox
from src.synth.scene import SceneConfig, generate


def track(tid, frames, x=50.0):
    return [Detection(f, tid, BBox(x + f, 50, 20, 20)) for f in frames]


def test_perfect_prediction():
    gt = {1: track(1, range(1, 11)), 2: track(2, range(1, 11), x=150)}
    pred = {7: track(7, range(1, 11)), 9: track(9, range(1, 11), x=150)}
    score = idf1(gt, pred)
    assert score.idf1 == 1.0
    assert (score.idtp, score.idfp, score.idfn) == (20, 0, 0)
    assert id_switches(gt, pred) == 0
    assert association_accuracy(gt, pred) == 1.0


def test_split_identity():
    gt = {1: track(1, range(1, 11))}
    pred = {1: track(1, range(1, 6)), 2: track(2, range(6, 11))}
    score = idf1(gt, pred)
    assert score.idtp == 5
    assert score.idf1 == pytest.approx(0.5)
    assert id_switches(gt, pred) == 1
    assert association_accuracy(gt, pred) == pytest.approx(8 / 9)


def test_empty_prediction():
    gt = {1: track(1, range(1, 6))}
    score = idf1(gt, {})
    assert score.idf1 == 0.0
    assert score.idfn == 5
    assert idf1({}, {}).idf1 == 0.0
    assert association_accuracy(gt, {}) == 0.0


def test_alternating_ids_switch_every_frame():
    gt = {1: track(1, range(1, 5))}
    pred = {1: track(1, [1, 3]), 2: track(2, [2, 4])}
    assert id_switches(gt, pred) == 3
    assert association_accuracy(gt, pred) == 0.0


def test_low_overlap_is_not_a_match():
    gt = {1: [Detection(1, 1, BBox(50, 50, 20, 20))]}
    pred = {1: [Detection(1, 1, BBox(65, 50, 20, 20))]}
    assert idf1(gt, pred).idtp == 0
    assert idf1(gt, pred, threshold=0.1).idtp == 1


def test_gap_histogram_cases():
    assert gap_histogram({1: [1, 2, 3, 4]}) == {}
    assert gap_histogram({1: [1, 2, 3, 10]}) == {7: 100.0}
    hist = gap_histogram({1: [1, 3, 5, 10], 2: [2, 4]})
    assert hist == {2: 75.0, 5: 25.0}
    assert list(hist) == sorted(hist)
    assert frame_intervals({1: track(1, [5, 1, 3])}) == [2, 2]


def test_gap_histogram_matches_scene_windows():
    scene = generate(SceneConfig(n_objects=6, n_frames=150, n_random_occlusions=10, max_gap=12, seed=4))
    hist = gap_histogram(frames_to_trajectories(scene.frames))
    expected = pd.Series(scene.expected_intervals()).value_counts(normalize=True) * 100
    assert hist == pytest.approx({int(k): float(v) for k, v in expected.items()})


def test_report_csv_and_plot(tmp_path):
    gt = {1: track(1, [1, 2, 5])}
    result = evaluate(gt, {3: track(3, [1, 2, 5])})
    text = metrics_report(result)
    assert text.startswith("IDF1                 1.0000")
    assert "     3  100.00%" in text
    assert "none" in metrics_report(evaluate({1: track(1, [1, 2])}, {}))

    frame = histogram_frame(result["gap_histogram"])
    assert list(frame.columns) == ["interval", "percent"]
    assert frame.to_dict("records") == [{"interval": 3, "percent": 100.0}]

    out = plot_gap_histogram(result["gap_histogram"], tmp_path / "gaps.png")
    assert out.stat().st_size > 0
