"""
Training targets and the association loss
"""
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from src.utils.errors import NumericError


@dataclass
class FramePairTargets:
    """
    Supervision for one frame t of a clip

    columns: sequence indices of the objects of frame t, in sequence order
    rows: (source sequence index, column position) pairs, one per tracked tid
    """

    frame: int
    columns: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    @property
    def sources(self):
        return [src for src, _ in self.rows]

    @property
    def labels(self):
        return [col for _, col in self.rows]


def build_targets(frame_index, track_id):
    """
    Build one FramePairTargets per frame t in [1, L-1]

    For every tid of frame t:
      - present in frame t-1: the row comes from its t-1 embedding
      - absent from t-1 but present earlier: the row comes from its latest
        embedding before t-1
      - first appearance at t: no row, it stays a negative column
    tids of t-1 that are missing at t produce no row.

    Args:
        frame_index: per sequence index, clip-relative frame (-1 for <bos>)
        track_id: per sequence index, identity (-1 entries never get rows)

    Returns:
        List of FramePairTargets
    """
    frames = [int(f) for f in frame_index]
    tids = [int(t) for t in track_id]
    n_frames = max(frames) + 1 if frames else 0

    by_frame = [[] for _ in range(n_frames)]
    for idx, f in enumerate(frames):
        if f >= 0:
            by_frame[f].append(idx)

    targets = []
    latest = {}  # tid -> latest sequence index among frames < t-1
    for t in range(1, n_frames):
        if t >= 2:
            for idx in by_frame[t - 2]:
                if tids[idx] >= 0:
                    latest[tids[idx]] = idx
        previous = {tids[idx]: idx for idx in by_frame[t - 1] if tids[idx] >= 0}

        target = FramePairTargets(frame=t, columns=list(by_frame[t]))
        for col, idx in enumerate(by_frame[t]):
            tid = tids[idx]
            if tid < 0:
                continue
            if tid in previous:
                target.rows.append((previous[tid], col))
            elif tid in latest:
                target.rows.append((latest[tid], col))
        targets.append(target)
    return targets


def frame_pair_loss(embeddings, target):
    """Mean cross-entropy of row-softmax(Z_rows . Z_t^T) against the target columns."""
    rows = embeddings[target.sources]
    cols = embeddings[target.columns]
    logits = rows @ cols.T
    if not torch.isfinite(logits).all():
        raise NumericError(f"non-finite logits in frame {target.frame}")
    labels = torch.tensor(target.labels, dtype=torch.long)
    return F.cross_entropy(logits, labels, reduction="mean")


def clip_loss(embeddings, targets):
    """
    Mean over frame pairs that have at least one row

    Returns a 0-d tensor; exactly 0 (without a graph) when no frame pair has rows.
    """
    losses = [frame_pair_loss(embeddings, t) for t in targets if t.rows]
    if not losses:
        return torch.zeros((), dtype=embeddings.dtype)
    return torch.stack(losses).mean()


def has_rows(targets):
    return any(t.rows for t in targets)


def batch_loss(model, batch, targets):
    """Mean clip_loss over the clips of ``batch`` that contribute at least one row."""
    losses = []
    for raw_seq, clip_targets in zip(batch, targets):
        if not has_rows(clip_targets):
            continue
        embeddings = model(model.tokenize(raw_seq))
        losses.append(clip_loss(embeddings, clip_targets))
    if not losses:
        return torch.zeros((), dtype=model.embed.weight.dtype)
    return torch.stack(losses).mean()


def sequence_targets(raw_seq):
    """build_targets for a RawSequence, indexed as in its tokenized form (<bos> at 0)."""
    frames = [-1] + [int(f) for f in raw_seq.frame_index]
    tids = [-1] + [int(t) for t in raw_seq.track_id]
    return build_targets(frames, tids)
