import numpy as np
import pytest
import torch

from src.algorithms.model import ModelConfig, build_model
from src.algorithms.tracker import PuTRTracker, TrackerConfig, TrackState, WindowBuffer, WindowEntry, track_sequence
from src.operators.tokenizer import RAW_DIM
from src.problem.detection import Detection
from src.problem.geometry import BBox
from src.synth.scene import NoiseConfig, SceneConfig, corrupt, generate
from src.utils.errors import DataError, NumericError

FRAME = (200, 100)


@pytest.fixture
def appearances(rng):
    return [rng.random(RAW_DIM).astype(np.float32) for _ in range(6)]


def det(frame, k, appearances, conf=0.9, cx=None):
    cx = 20 + 30 * k if cx is None else cx
    return Detection(frame, -1, BBox(cx, 50, 16, 30), conf, appearance=appearances[k])


def make_tracker(model, frame_size=FRAME, **kwargs):
    return PuTRTracker(model, TrackerConfig(**kwargs), frame_size=frame_size)


def test_first_frame_thresholds(tiny_model, appearances):
    tracker = make_tracker(tiny_model, tau_new=0.6)
    dets = [det(1, 0, appearances, 0.9), det(1, 1, appearances, 0.7), det(1, 2, appearances, 0.3)]
    assert tracker.step(1, dets) == [1, 2, -1]
    assert all(t.state == TrackState.New for t in tracker.active.values())


def test_detections_below_tau_det_are_discarded(tiny_model, appearances):
    tracker = make_tracker(tiny_model, tau_det=0.2, tau_new=0.6)
    assert tracker.step(1, [det(1, 0, appearances, 0.1)]) == [-1]
    assert not tracker.active and len(tracker.window) == 0


def test_unconfirmed_tracklet_is_retired(tiny_model, appearances):
    tracker = make_tracker(tiny_model)
    tracker.step(1, [det(1, 0, appearances)])
    tracker.step(2, [])
    assert not tracker.active
    assert list(tracker.finished) == [1]


def test_same_box_keeps_identity(tiny_model, appearances):
    tracker = make_tracker(tiny_model)
    tids = [tracker.step(f, [det(f, 0, appearances)]) for f in range(1, 11)]
    assert tids == [[1]] * 10
    trajectories = tracker.finish()
    assert list(trajectories) == [1]
    assert [d.frame for d in trajectories[1]] == list(range(1, 11))
    assert all(d.tid == 1 for d in trajectories[1])


def test_lost_tracklet_retired_after_window(tiny_model, appearances):
    tracker = make_tracker(tiny_model, window_T=3)
    tracker.step(1, [det(1, 0, appearances)])
    tracker.step(2, [det(2, 0, appearances)])
    for frame in (3, 4, 5):
        tracker.step(frame, [])
        assert tracker.active[1].state == TrackState.Lost
    tracker.step(6, [])
    assert not tracker.active and 1 in tracker.finished


def test_lost_tracklet_emitted_at_stream_end(tiny_model, appearances):
    tracker = make_tracker(tiny_model)
    tracker.step(1, [det(1, 0, appearances)])
    tracker.step(2, [det(2, 0, appearances)])
    tracker.step(3, [])
    trajectories = tracker.finish()
    assert [d.frame for d in trajectories[1]] == [1, 2]


def test_no_frames_gives_no_trajectories(tiny_model):
    assert make_tracker(tiny_model).finish() == {}
    assert track_sequence(make_tracker(tiny_model), {}) == {}


def test_input_validation(tiny_model, appearances):
    tracker = make_tracker(tiny_model)
    tracker.step(5, [det(5, 0, appearances)])
    with pytest.raises(DataError):
        tracker.step(5, [])
    with pytest.raises(DataError):
        tracker.step(6, [det(6, 0, appearances, cx=500)])
    with pytest.raises(DataError):
        PuTRTracker(tiny_model).step(1, [det(1, 0, appearances)])


def test_window_must_fit_the_model(appearances):
    model = build_model(ModelConfig(d_model=16, n_layers=1, n_heads=2, max_window=8))
    with pytest.raises(ValueError):
        PuTRTracker(model, TrackerConfig(window_T=30))


@pytest.mark.parametrize("kwargs", [{"tau_det": 0.7, "tau_new": 0.6}, {"window_T": 0}, {"w_floor": -1.0}])
def test_invalid_tracker_config(kwargs):
    with pytest.raises(ValueError):
        TrackerConfig(**kwargs)


def test_window_buffer_evicts_old_frames():
    buffer = WindowBuffer(window_T=2)
    for frame in (1, 2, 3, 4):
        buffer.extend([WindowEntry(frame, 1, None, BBox(1, 1, 1, 1), 1.0)])
    buffer.evict(5)
    assert [e.frame for e in buffer.entries] == [3, 4]


@pytest.fixture
def scene_frames():
    scene = generate(SceneConfig(width=200, height=120, n_objects=4, n_frames=12, min_size=12, max_size=24, seed=3))
    return scene, corrupt(scene.frames, NoiseConfig(seed=1), 200, 120)


@pytest.mark.parametrize('scene_seed', range(10))
def test_shuffled_detections_get_permuted_tids(tiny_model, scene_seed):
    scene = generate(SceneConfig(width=200, height=120, n_objects=4, n_frames=12, min_size=12, max_size=24,
                                 seed=scene_seed))
    frames = corrupt(scene.frames, NoiseConfig(seed=scene_seed + 100), 200, 120)
    ordered = make_tracker(tiny_model, (200, 120), window_T=8)
    ordered_tids = {frame: ordered.step(frame, frames[frame]) for frame in sorted(frames)}
    for perm_seed in range(10):
        rng = np.random.default_rng(perm_seed)
        shuffled = make_tracker(tiny_model, (200, 120), window_T=8)
        for frame in sorted(frames):
            dets = frames[frame]
            order = rng.permutation(len(dets))
            a = ordered_tids[frame]
            assert shuffled.step(frame, [dets[i] for i in order]) == [a[i] for i in order]
            valid = [t for t in a if t >= 0]
            assert len(valid) == len(set(valid))


def test_non_finite_parameters_fail_association(tiny_config, appearances):
    model = build_model(tiny_config, seed=0).eval()
    tracker = make_tracker(model)
    tracker.step(1, [det(1, 0, appearances)])
    with torch.no_grad():
        next(model.parameters()).fill_(float('nan'))
    with pytest.raises(NumericError):
        tracker.step(2, [det(2, 0, appearances)])


def test_window_stays_bounded(tiny_model, scene_frames):
    _, frames = scene_frames
    tracker = make_tracker(tiny_model, (200, 120), window_T=4)
    for frame in sorted(frames):
        tracker.step(frame, frames[frame])
        assert all(e.frame >= frame - 4 for e in tracker.window.entries)
        assert len(tracker.window) <= sum(len(frames.get(f, [])) for f in range(frame - 4, frame + 1))


def test_images_replace_appearance_vectors(tiny_model):
    scene = generate(SceneConfig(width=160, height=120, n_objects=3, n_frames=5, min_size=12, max_size=24, seed=4))
    frames = {f: [Detection(f, -1, d.bbox, 1.0) for d in dets] for f, dets in scene.frames.items()}
    tracker = PuTRTracker(tiny_model, TrackerConfig(window_T=4))
    trajectories = track_sequence(tracker, frames, images=scene.render)
    assert sum(len(v) for v in trajectories.values()) == sum(len(v) for v in frames.values())
