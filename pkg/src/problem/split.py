"""
Splitting ground-truth sequences into training clips
"""
from dataclasses import dataclass, field

import numpy as np
import torch

from src.algorithms.model import RawSequence
from src.operators.tokenizer import RAW_DIM
from src.problem.geometry import boxes_to_array, normalize_boxes
from src.utils.errors import DataError


@dataclass
class Clip:
    """
    L frames taken every ``interval`` frames from a sequence

    frames: list (clip order) of lists of Detection with tid >= 0
    """

    frames: list
    width: float
    height: float
    start: int = 1
    interval: int = 1
    name: str = field(default="")

    def __len__(self):
        return len(self.frames)

    def validate(self):
        for k, dets in enumerate(self.frames):
            tids = [d.tid for d in dets]
            if len(set(tids)) != len(tids):
                raise DataError(f"{self.name}: duplicate tid in frame {self.start + k * self.interval}")
            for d in dets:
                if d.tid < 0:
                    raise DataError(f"{self.name}: training clips need identities, got tid {d.tid}")
                if d.appearance is None:
                    raise DataError(f"{self.name}: frame {d.frame} tid {d.tid} has no appearance vector")
        return self


def sequence_span(sequence):
    """(first, last) frame of a sequence's ground truth."""
    if not sequence.gt:
        return 1, max(1, sequence.length)
    return 1, max(sequence.length, max(sequence.gt))


def clip_count(sequence, length, per_sequence=0):
    first, last = sequence_span(sequence)
    if per_sequence > 0:
        return per_sequence
    return max(1, (last - first + 1) // length)


def sample_clip(sequence, length, interval, start):
    first, last = sequence_span(sequence)
    if start < first or start + (length - 1) * interval > last:
        raise DataError(f"{sequence.name}: clip of {length} frames every {interval} from {start} "
                        f"leaves frames {first}..{last}")
    frames = [list(sequence.gt.get(start + k * interval, [])) for k in range(length)]
    return Clip(frames, sequence.width, sequence.height, start, interval, sequence.name).validate()


def sample_clips(sequence, length, n_clips, rng, min_interval=1, max_interval=10):
    """
    Random clips with a random frame interval

    The clip length is capped at the sequence length and the interval is
    clamped so that the clip fits.
    """
    first, last = sequence_span(sequence)
    n_frames = last - first + 1
    length = min(length, n_frames)
    widest = max(1, (n_frames - 1) // max(1, length - 1)) if length > 1 else max_interval
    clips = []
    for _ in range(n_clips):
        hi = max(1, min(max_interval, widest))
        lo = min(min_interval, hi)
        interval = int(rng.integers(lo, hi + 1))
        latest_start = last - (length - 1) * interval
        start = int(rng.integers(first, latest_start + 1))
        clips.append(sample_clip(sequence, length, interval, start))
    return clips


def clip_to_raw_sequence(clip, raw_vectors=None):
    """
    Flatten a clip into a RawSequence (frame positions 0..L-1)

    raw_vectors: optional list aligned with the flattened objects replacing their appearance.
    """
    dets = [(k, d) for k, frame in enumerate(clip.frames) for d in frame]
    if raw_vectors is None:
        raw_vectors = [d.appearance for _, d in dets]
    if dets:
        raw = np.stack([np.asarray(v, dtype=np.float32).reshape(-1) for v in raw_vectors])
        norm = normalize_boxes(boxes_to_array([d.bbox for _, d in dets]), clip.width, clip.height)
    else:
        raw = np.zeros((0, RAW_DIM), dtype=np.float32)
        norm = np.zeros((0, 4))
    return RawSequence(
        torch.from_numpy(raw),
        torch.tensor([k for k, _ in dets], dtype=torch.long),
        torch.as_tensor(norm, dtype=torch.float64),
        torch.tensor([d.tid for _, d in dets], dtype=torch.long),
    )
