from dataclasses import replace

import numpy as np

from src.operators.tokenizer import CHANNELS, GRID
from src.problem.split import Clip


def flip_patch(vector):
    """Mirror a flattened 64x64x3 patch left to right."""
    patch = np.asarray(vector).reshape(GRID, GRID, CHANNELS)
    return np.ascontiguousarray(patch[:, ::-1]).reshape(-1)


def flip_clip(clip, rng, p=0.5):
    # same decision for the whole clip so motion stays consistent
    if rng.random() >= p:
        return clip
    frames = [[replace(d, bbox=d.bbox.flipped(clip.width), appearance=flip_patch(d.appearance)) for d in dets]
              for dets in clip.frames]
    return Clip(frames, clip.width, clip.height, clip.start, clip.interval, clip.name)


def jitter_appearance(vectors, sigma, rng):
    """Independent gaussian noise per object and frame, clipped to [0, 1]."""
    if sigma <= 0 or not len(vectors):
        return vectors
    return [np.clip(v + rng.normal(0.0, sigma, size=np.shape(v)), 0.0, 1.0).astype(np.float32) for v in vectors]


def augment_clip(clip, rng, flip_prob=0.5, appearance_jitter=0.0):
    """
    Returns:
        (clip, raw vectors aligned with the clip's flattened objects)
    """
    clip = flip_clip(clip, rng, flip_prob)
    vectors = [d.appearance for dets in clip.frames for d in dets]
    return clip, jitter_appearance(vectors, appearance_jitter, rng)
