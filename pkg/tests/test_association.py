import itertools
import math

import numpy as np
import pytest

from src.algorithms.association import affinity, hungarian_max, similarity, weights
from src.problem.geometry import BBox, hmiou, iou, iou_scale
from src.utils.errors import DataError, NumericError


def random_boxes(rng, n):
    return np.column_stack([rng.uniform(0, 40, size=(n, 2)), rng.uniform(5, 20, size=(n, 2))])


def similarity_oracle(past, cur, past_boxes, cur_boxes, last_boxes):
    S = np.zeros((len(past), len(cur)))
    for i in range(len(past)):
        logits = [sum(past[i][k] * cur[j][k] for k in range(len(past[i]))) for j in range(len(cur))]
        top = max(logits)
        denom = sum(math.exp(v - top) for v in logits)
        for j in range(len(cur)):
            prob = math.exp(logits[j] - top) / denom
            S[i, j] = prob * iou_scale(BBox(*past_boxes[i]), BBox(*cur_boxes[j])) \
                + iou(BBox(*last_boxes[i]), BBox(*cur_boxes[j]))
    return S


def test_orthonormal_hand_case():
    e = np.eye(2)
    boxes = np.array([[0, 0, 2, 2], [100, 100, 2, 2]], dtype=float)
    far = np.array([[500, 500, 2, 2], [700, 700, 2, 2]], dtype=float)
    S = similarity(e, e, boxes, boxes, far)
    hi, lo = math.e / (math.e + 1), 1 / (math.e + 1)
    assert S == pytest.approx(np.array([[hi, lo], [lo, hi]]), abs=1e-9)


def test_position_term_is_added(rng):
    past, cur = rng.normal(size=(2, 4)), rng.normal(size=(3, 4))
    past_boxes = np.array([[0, 0, 2, 2], [0, 0, 2, 2]], dtype=float)
    cur_boxes = random_boxes(rng, 3)
    last = random_boxes(rng, 2)
    S = similarity(past, cur, past_boxes, cur_boxes, last)
    prob = similarity(past, cur, past_boxes, cur_boxes, last, use_compensation=False)
    scale = np.array([[iou_scale(BBox(*a), BBox(*b)) for b in cur_boxes] for a in past_boxes])
    position = np.array([[iou(BBox(*a), BBox(*b)) for b in cur_boxes] for a in last])
    assert S - prob * scale == pytest.approx(position, abs=1e-12)


def test_bare_softmax_when_compensation_is_neutral(rng):
    past, cur = rng.normal(size=(3, 5)), rng.normal(size=(4, 5))
    boxes = np.tile([10.0, 10.0, 4.0, 4.0], (4, 1))
    far = np.tile([900.0, 900.0, 4.0, 4.0], (3, 1))
    S = similarity(past, cur, boxes[:3], boxes, far)
    logits = past @ cur.T
    expected = np.exp(logits - logits.max(1, keepdims=True))
    expected /= expected.sum(1, keepdims=True)
    assert np.array_equal(S, similarity(past, cur, boxes[:3], boxes, far, use_compensation=False))
    assert S == pytest.approx(expected, abs=1e-12)


def test_similarity_matches_oracle(rng):
    for _ in range(500):
        n_rows, n_cols, d = rng.integers(1, 9), rng.integers(1, 9), rng.integers(2, 6)
        past, cur = rng.normal(size=(n_rows, d)), rng.normal(size=(n_cols, d))
        pb, cb, lb = random_boxes(rng, n_rows), random_boxes(rng, n_cols), random_boxes(rng, n_rows)
        assert similarity(past, cur, pb, cb, lb) == pytest.approx(similarity_oracle(past, cur, pb, cb, lb), abs=1e-6)


def test_similarity_empty_and_non_finite():
    assert similarity(np.zeros((0, 4)), np.ones((2, 4)), [], [[1, 1, 1, 1]] * 2, []).shape == (0, 2)
    with pytest.raises(NumericError):
        similarity(np.array([[np.inf, 0.0]]), np.ones((2, 2)), [[1, 1, 1, 1]], [[1, 1, 1, 1]] * 2, [[1, 1, 1, 1]])


def test_affinity_max_pools_rows(rng):
    S = rng.random((6, 4))
    groups = [0, 1, 1, 2, 2, 2]
    A = affinity(S, groups, 3)
    for k in range(3):
        for j in range(4):
            assert A[k, j] == max(S[i, j] for i in range(6) if groups[i] == k)
    assert np.array_equal(affinity(S, list(range(6)), 6), S)
    assert affinity([[0.2], [0.9]], [0, 0])[0, 0] == 0.9


def test_affinity_is_monotone(rng):
    S = rng.random((4, 3))
    groups = [0, 0, 1, 1]
    before = affinity(S, groups)
    S[1, 2] += 0.5
    assert affinity(S, groups)[0, 2] >= before[0, 2]


def test_affinity_rejects_trajectory_without_rows():
    with pytest.raises(DataError):
        affinity(np.ones((2, 2)), [0, 0], 2)


@pytest.mark.parametrize("w_floor, confs, expected", [(0.0, (1.0, 1.0), 0.0), (0.05, (0.8, 0.5), 0.02)])
def test_weights_disjoint(w_floor, confs, expected):
    W = weights([[0, 0, 2, 2]], [confs[0]], [[100, 100, 2, 2]], [confs[1]], w_floor=w_floor)
    assert W[0, 0] == pytest.approx(expected)


def test_weights_identity_and_oracle(rng):
    assert weights([[5, 5, 2, 4]], [1.0], [[5, 5, 2, 4]], [1.0])[0, 0] == pytest.approx(1.0)
    for _ in range(500):
        n, m = rng.integers(1, 9), rng.integers(1, 9)
        tb, db = random_boxes(rng, n), random_boxes(rng, m)
        tc, dc = rng.random(n), rng.random(m)
        W = weights(tb, tc, db, dc, w_floor=0.05)
        for i in range(n):
            for j in range(m):
                expected = max(hmiou(BBox(*tb[i]), BBox(*db[j])), 0.05) * tc[i] * dc[j]
                assert W[i, j] == pytest.approx(expected, abs=1e-6)


def test_weight_switches():
    W = weights([[0, 0, 2, 2]], [0.5], [[100, 100, 2, 2]], [0.4], use_hmiou=False, use_traj_conf=False)
    assert W[0, 0] == pytest.approx(0.4)


@pytest.mark.parametrize("score, pairs, total", [
    ([[1, 0], [0, 1]], [(0, 0), (1, 1)], 2.0),
    ([[0.9, 0.2], [0.7, 0.6]], [(0, 0), (1, 1)], 1.5),
    ([[0.1, 0.9, 0.3], [0.8, 0.2, 0.4]], [(0, 1), (1, 0)], 1.7),
])
def test_hungarian_hand_cases(score, pairs, total):
    result = hungarian_max(score)
    assert result.matches == pairs
    assert result.total == pytest.approx(total)


def brute_force_max(score):
    n, m = score.shape
    best = 0.0
    if n <= m:
        for cols in itertools.permutations(range(m), n):
            best = max(best, sum(max(score[i, c], 0.0) for i, c in enumerate(cols)))
    else:
        for rows in itertools.permutations(range(n), m):
            best = max(best, sum(max(score[r, j], 0.0) for j, r in enumerate(rows)))
    return best


def test_hungarian_is_optimal(rng):
    for _ in range(1000):
        n, m = rng.integers(1, 8), rng.integers(1, 8)
        score = rng.random((n, m))
        result = hungarian_max(score)
        assert result.total == pytest.approx(brute_force_max(score), abs=1e-12)
        rows = [r for r, _ in result.matches]
        cols = [c for _, c in result.matches]
        assert len(set(rows)) == len(rows) and len(set(cols)) == len(cols)
        assert sorted(rows + result.unmatched_rows) == list(range(n))
        assert sorted(cols + result.unmatched_cols) == list(range(m))


def lexicographic_oracle(score, eps=1e-9):
    n, m = score.shape
    if n <= m:
        assignments = [list(enumerate(cols)) for cols in itertools.permutations(range(m), n)]
    else:
        assignments = [[(r, j) for j, r in enumerate(rows)] for rows in itertools.permutations(range(n), m)]
    kept = [sorted((r, c) for r, c in pairs if score[r, c] > eps) for pairs in assignments]
    totals = [sum(score[r, c] for r, c in pairs) for pairs in kept]
    best = max(totals)
    return min(pairs for pairs, total in zip(kept, totals) if total == best)


@pytest.mark.parametrize("score, pairs", [
    ([[2, 2, 2], [0, 0, 0], [2, 2, 2]], [(0, 0), (2, 1)]),
    ([[1, 0, 0], [0, 0, 0], [0, 2, 1], [2, 1, 1]], [(0, 0), (2, 1), (3, 2)]),
    ([[1, 1], [1, 1]], [(0, 0), (1, 1)]),
    ([[0, 3], [3, 3]], [(0, 1), (1, 0)]),
])
def test_ties_go_to_the_lowest_pairs(score, pairs):
    assert hungarian_max(score).matches == pairs


def test_ties_match_lexicographic_oracle(rng):
    for _ in range(2000):
        n, m = rng.integers(1, 5), rng.integers(1, 5)
        score = rng.integers(0, 4, size=(n, m)).astype(float)
        result = hungarian_max(score)
        assert result.matches == lexicographic_oracle(score), score
        assert result.total == brute_force_max(score)


def test_hungarian_prunes_zero_pairs():
    result = hungarian_max([[0.0, 0.0], [0.0, 0.5]])
    assert result.matches == [(1, 1)]
    assert result.unmatched_rows == [0] and result.unmatched_cols == [0]


def test_hungarian_rejects_non_finite():
    with pytest.raises(NumericError):
        hungarian_max([[np.nan, 1.0]])
