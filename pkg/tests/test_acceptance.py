"""End-to-end training and tracking on synthetic scenes (run with --runslow)"""
import numpy as np
import pytest

from experiments.config import TRAIN_PRESETS, preset
from src.algorithms.model import ModelConfig
from src.algorithms.tracker import PuTRTracker, TrackerConfig, track_sequence
from src.algorithms.training import TrainConfig, train
from src.eval.metrics import association_accuracy, frame_matches, idf1
from src.problem.detection import frames_to_trajectories
from src.synth.scene import NoiseConfig, SceneConfig, corrupt, generate

pytestmark = pytest.mark.slow

MODEL = ModelConfig(d_model=64, n_layers=2, n_heads=4, max_window=32)


def scene_config(seed, **kwargs):
    values = dict(n_objects=10, n_frames=200, appearance_similarity=0.3, n_random_occlusions=6, max_gap=15,
                  seed=seed)
    values.update(kwargs)
    return SceneConfig(**values)


@pytest.fixture(scope="module")
def trained_model():
    sequences = [generate(scene_config(100 + k)).to_sequence(name=f"train-{k}") for k in range(8)]
    result = train(sequences, MODEL, TrainConfig(**preset(TRAIN_PRESETS, "desk")))
    assert result.epoch_losses[-1] < result.epoch_losses[0]
    return result.model


def run_tracker(model, scene, noise, **kwargs):
    cfg = scene.config
    det = corrupt(scene.frames, noise, cfg.width, cfg.height)
    tracker = PuTRTracker(model, TrackerConfig(**kwargs), frame_size=(cfg.width, cfg.height))
    return track_sequence(tracker, det, first_frame=1, last_frame=cfg.n_frames)


def held_out_scores(model, noise):
    idf1s, accuracies = [], []
    for k in range(4):
        scene = generate(scene_config(200 + k))
        gt = frames_to_trajectories(scene.frames)
        pred = run_tracker(model, scene, noise)
        idf1s.append(idf1(gt, pred).idf1)
        accuracies.append(association_accuracy(gt, pred))
    return float(np.mean(idf1s)), float(np.mean(accuracies))


def test_clean_detections(trained_model):
    score, accuracy = held_out_scores(trained_model, NoiseConfig())
    assert accuracy >= 0.95
    assert score >= 0.90


def test_noisy_detections(trained_model):
    noise = NoiseConfig(box_sigma=2.0, fp_rate=0.05, fn_rate=0.05, conf_sigma=0.1, seed=7)
    score, _ = held_out_scores(trained_model, noise)
    assert score >= 0.80


def test_reentry_keeps_the_identity(trained_model):
    scene = generate(scene_config(300, n_random_occlusions=0, exits="1:60:20"))
    gt = frames_to_trajectories(scene.frames)
    pred = run_tracker(trained_model, scene, NoiseConfig(), window_T=30, w_floor=0.05)
    matched = {f: p for f, g, p in frame_matches(gt, pred) if g == 1}
    assert 59 in matched and 80 in matched
    assert matched[59] == matched[80]
