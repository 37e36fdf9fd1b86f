"""
Identity metrics and the disappearance-interval histogram

All functions take trajectories as dict tid -> list[Detection] (1-based frames).
"""
from typing import NamedTuple

import numpy as np
import pandas as pd

from src.algorithms.association import hungarian_max
from src.problem.detection import trajectories_to_frames
from src.problem.geometry import boxes_to_array, iou_matrix

IOU_THRESHOLD = 0.5


class IDF1Score(NamedTuple):
    idf1: float
    idtp: int
    idfp: int
    idfn: int


def frame_matches(gt, pred, threshold=IOU_THRESHOLD):
    """
    Per-frame one-to-one GT <-> prediction matches at IoU >= threshold

    Returns:
        list of (frame, gt tid, pred tid), frames ascending
    """
    gt_frames = trajectories_to_frames(gt)
    pred_frames = trajectories_to_frames(pred)
    matches = []
    for frame in sorted(set(gt_frames) & set(pred_frames)):
        g, p = gt_frames[frame], pred_frames[frame]
        overlap = iou_matrix(boxes_to_array([d.bbox for d in g]), boxes_to_array([d.bbox for d in p]))
        score = np.where(overlap >= threshold, overlap, 0.0)
        for r, c in hungarian_max(score, match_eps=0.0).matches:
            matches.append((frame, g[r].tid, p[c].tid))
    return matches


def idf1(gt, pred, threshold=IOU_THRESHOLD):
    """IDF1 with the global ID mapping that maximizes the identity-consistent matches."""
    n_gt = sum(len(v) for v in gt.values())
    n_pred = sum(len(v) for v in pred.values())
    matches = frame_matches(gt, pred, threshold)

    idtp = 0
    if matches:
        gt_ids = sorted({g for _, g, _ in matches})
        pred_ids = sorted({p for _, _, p in matches})
        gi = {t: k for k, t in enumerate(gt_ids)}
        pi = {t: k for k, t in enumerate(pred_ids)}
        counts = np.zeros((len(gt_ids), len(pred_ids)))
        for _, g, p in matches:
            counts[gi[g], pi[p]] += 1
        idtp = int(round(hungarian_max(counts, match_eps=0.0).total))

    idfp, idfn = n_pred - idtp, n_gt - idtp
    denom = 2 * idtp + idfp + idfn
    return IDF1Score(2 * idtp / denom if denom else 0.0, idtp, idfp, idfn)


def id_switches(gt, pred, threshold=IOU_THRESHOLD):
    """Times a GT identity's matched prediction id differs from the one it last matched."""
    last = {}
    switches = 0
    for _, g, p in frame_matches(gt, pred, threshold):
        if g in last and last[g] != p:
            switches += 1
        last[g] = p
    return switches


def association_accuracy(gt, pred, threshold=IOU_THRESHOLD):
    """
    Fraction of successive GT links (same tid, next appearance) whose two ends
    are matched to the same prediction id. 1.0 when GT has no links.
    """
    matched = {(f, g): p for f, g, p in frame_matches(gt, pred, threshold)}
    links = correct = 0
    for tid, dets in gt.items():
        frames = sorted(d.frame for d in dets)
        for a, b in zip(frames, frames[1:]):
            links += 1
            pa, pb = matched.get((a, tid)), matched.get((b, tid))
            correct += pa is not None and pa == pb
    return correct / links if links else 1.0


def frame_intervals(trajectories):
    """Successive frame differences of every trajectory."""
    out = []
    for dets in trajectories.values():
        frames = sorted(d if isinstance(d, (int, np.integer)) else d.frame for d in dets)
        out.extend(int(b - a) for a, b in zip(frames, frames[1:]))
    return out


def gap_histogram(trajectories):
    """Interval length -> percentage among the intervals longer than 1 frame."""
    intervals = pd.Series(frame_intervals(trajectories), dtype="int64")
    gaps = intervals[intervals > 1]
    if gaps.empty:
        return {}
    shares = gaps.value_counts(normalize=True).sort_index() * 100.0
    return {int(k): float(v) for k, v in shares.items()}


def histogram_frame(hist):
    return pd.DataFrame({"interval": list(hist), "percent": list(hist.values())}, columns=["interval", "percent"])


def evaluate(gt, pred, threshold=IOU_THRESHOLD):
    score = idf1(gt, pred, threshold)
    return {
        "idf1": score.idf1,
        "idtp": score.idtp,
        "idfp": score.idfp,
        "idfn": score.idfn,
        "id_switches": id_switches(gt, pred, threshold),
        "association_accuracy": association_accuracy(gt, pred, threshold),
        "gt_trajectories": len(gt),
        "pred_trajectories": len(pred),
        "gap_histogram": gap_histogram(gt),
    }


def metrics_report(result):
    """Plain-text report of an ``evaluate`` result."""
    lines = [
        f"IDF1                 {result['idf1']:.4f}",
        f"IDTP / IDFP / IDFN   {result['idtp']} / {result['idfp']} / {result['idfn']}",
        f"ID switches          {result['id_switches']}",
        f"Association accuracy {result['association_accuracy']:.4f}",
        f"GT / predicted ids   {result['gt_trajectories']} / {result['pred_trajectories']}",
        "GT disappearance intervals (> 1 frame):",
    ]
    hist = result["gap_histogram"]
    if not hist:
        lines.append("  none")
    for interval, percent in hist.items():
        lines.append(f"  {interval:4d}  {percent:6.2f}%")
    return "\n".join(lines) + "\n"


def plot_gap_histogram(hist, path, title="Disappearance intervals"):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(list(hist), list(hist.values()), color="tab:blue")
    ax.set_xlabel("Interval (frames)")
    ax.set_ylabel("Percent of gaps")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
