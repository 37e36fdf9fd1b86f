"""
Trajectory-detection association

similarity: S = rowsoftmax(Z_past . Z_cur^T) * I_scale + I_last   (past objects x detections)
affinity:   A[k, j] = max of S[i, j] over the rows i of trajectory k
weights:    W[k, j] = max(HMIoU, w_floor) * conf_k * conf_j
The Hungarian solver then maximizes the total of A * W.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import softmax

from src.problem.geometry import hmiou_matrix, iou_matrix, iou_scale_matrix
from src.utils.errors import DataError, NumericError

MATCH_EPS = 1e-9


@dataclass
class AffinityMatrix:
    """A and W for the active trajectories (rows, ordered as ``track_ids``) against detections"""

    A: np.ndarray
    W: np.ndarray
    track_ids: list = field(default_factory=list)

    @property
    def score(self):
        return self.A * self.W


@dataclass
class Assignment:
    matches: list
    unmatched_rows: list
    unmatched_cols: list
    total: float = 0.0


def _as_matrix(x, cols):
    return np.asarray(x, dtype=np.float64).reshape(-1, cols)


def similarity(past_embeddings, current_embeddings, past_boxes, current_boxes, trajectory_last_boxes,
               use_compensation=True):
    """
    Similarity between every past-window object (rows) and every detection (columns)

    Args:
        past_embeddings: (P, d) output embeddings of frames t-T .. t-1
        current_embeddings: (D, d) output embeddings of frame t
        past_boxes: (P, 4) each past object's own box
        current_boxes: (D, 4) detection boxes
        trajectory_last_boxes: (P, 4) latest box of the trajectory each row belongs to
        use_compensation: multiply by the scale IoU and add the last-box IoU

    Returns:
        (P, D) array
    """
    past = np.asarray(past_embeddings, dtype=np.float64)
    current = np.asarray(current_embeddings, dtype=np.float64)
    n_rows, n_cols = len(past), len(current)
    if n_rows == 0 or n_cols == 0:
        return np.zeros((n_rows, n_cols))

    prob = softmax(past @ current.T, axis=1)
    if not np.isfinite(prob).all():
        raise NumericError("non-finite similarity logits")
    if not use_compensation:
        return prob
    scale = iou_scale_matrix(_as_matrix(past_boxes, 4), _as_matrix(current_boxes, 4))
    position = iou_matrix(_as_matrix(trajectory_last_boxes, 4), _as_matrix(current_boxes, 4))
    return prob * scale + position


def affinity(S, row_to_trajectory, n_trajectories=None):
    """A[k, j] = max over rows i with row_to_trajectory[i] == k of S[i, j]."""
    S = np.asarray(S, dtype=np.float64)
    rows = np.asarray(row_to_trajectory, dtype=np.int64).reshape(-1)
    if rows.shape[0] != S.shape[0]:
        raise DataError(f"{rows.shape[0]} row labels for {S.shape[0]} similarity rows")
    if n_trajectories is None:
        n_trajectories = int(rows.max()) + 1 if rows.size else 0
    counts = np.bincount(rows, minlength=n_trajectories) if rows.size else np.zeros(n_trajectories, int)
    if len(counts) > n_trajectories or (counts[:n_trajectories] == 0).any():
        empty = np.flatnonzero(counts[:n_trajectories] == 0).tolist()
        raise DataError(f"trajectories without rows in the window: {empty}")

    A = np.full((n_trajectories, S.shape[1]), -np.inf)
    np.maximum.at(A, rows, S)
    return A


def weights(trajectory_boxes, trajectory_conf, detection_boxes, detection_conf, w_floor=0.05,
            use_hmiou=True, use_traj_conf=True, use_det_conf=True):
    """W[i, j] = max(hmiou(traj_i, det_j), w_floor) * traj_conf_i * det_conf_j."""
    traj_boxes = _as_matrix(trajectory_boxes, 4)
    det_boxes = _as_matrix(detection_boxes, 4)
    W = np.ones((len(traj_boxes), len(det_boxes)))
    if use_hmiou:
        W = np.maximum(hmiou_matrix(traj_boxes, det_boxes), w_floor)
    if use_traj_conf:
        W = W * np.asarray(trajectory_conf, dtype=np.float64).reshape(-1, 1)
    if use_det_conf:
        W = W * np.asarray(detection_conf, dtype=np.float64).reshape(1, -1)
    return W


def _best_total(kept):
    if not kept.size:
        return 0.0
    rows, cols = linear_sum_assignment(kept, maximize=True)
    return float(kept[rows, cols].sum())


def _best_columns(kept):
    """Column each row takes in one optimal assignment of ``kept`` (-1 when unassigned or zero)."""
    out = np.full(kept.shape[0], -1)
    if kept.size:
        rows, cols = linear_sum_assignment(kept, maximize=True)
        for r, c in zip(rows, cols):
            if kept[r, c] > 0:
                out[r] = c
    return out


def hungarian_max(score, match_eps=MATCH_EPS):
    """
    Maximum-total one-to-one assignment on a rectangular score matrix

    Pairs whose score is <= match_eps are returned as unmatched on both sides.
    Among optimal assignments the one whose sorted pair list is lexicographically
    smallest is returned, so ties go to the lowest (row, column).
    """
    score = np.asarray(score, dtype=np.float64)
    if score.ndim != 2:
        raise DataError(f"score must be a matrix, got shape {score.shape}")
    if not np.isfinite(score).all():
        raise NumericError("score matrix holds non-finite entries")
    n_rows, n_cols = score.shape

    kept = np.where(score > match_eps, score, 0.0)
    best = _best_total(kept)
    tol = 1e-12 * max(1.0, best)

    matches = []
    fixed = 0.0
    free = list(range(n_cols))
    for r in range(n_rows):
        if fixed >= best - tol:
            break
        below = kept[r + 1:]
        guess = _best_columns(kept[r:][:, free])[0]
        for k, c in enumerate(free):
            if kept[r, c] <= 0:
                continue
            if k != guess:
                rest = _best_total(below[:, [f for f in free if f != c]])
                if fixed + kept[r, c] + rest < best - tol:
                    continue
            matches.append((r, c))
            fixed += kept[r, c]
            free.remove(c)
            break

    matched_rows = {r for r, _ in matches}
    matched_cols = {c for _, c in matches}
    return Assignment(
        matches=matches,
        unmatched_rows=[r for r in range(n_rows) if r not in matched_rows],
        unmatched_cols=[c for c in range(n_cols) if c not in matched_cols],
        total=float(sum(score[r, c] for r, c in matches)),
    )


if __name__ == '__main__':
    print(hungarian_max([[0.9, 0.2], [0.7, 0.6]]))
