"""
Axis-aligned boxes and the IoU family used by the affinity and weight matrices

Boxes live in center form (cx, cy, w, h) in pixels. The matrix helpers take
(N, 4) arrays in the same layout and are what the association code calls;
the scalar functions are thin wrappers around them.
"""
from dataclasses import dataclass

import numpy as np

from src.utils.errors import DataError


@dataclass(frozen=True)
class BBox:
    """Center-form box in pixels"""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (np.isfinite(self.cx) and np.isfinite(self.cy)):
            raise DataError(f"non-finite box center ({self.cx}, {self.cy})")
        if not (self.w > 0 and self.h > 0) or not (np.isfinite(self.w) and np.isfinite(self.h)):
            raise DataError(f"box width and height must be positive, got w={self.w}, h={self.h}")

    @classmethod
    def from_ltwh(cls, left, top, width, height):
        return cls(left + width / 2.0, top + height / 2.0, width, height)

    @classmethod
    def from_ltrb(cls, left, top, right, bottom):
        return cls((left + right) / 2.0, (top + bottom) / 2.0, right - left, bottom - top)

    @property
    def left(self):
        return self.cx - self.w / 2.0

    @property
    def top(self):
        return self.cy - self.h / 2.0

    @property
    def right(self):
        return self.cx + self.w / 2.0

    @property
    def bottom(self):
        return self.cy + self.h / 2.0

    def ltrb(self):
        return (self.left, self.top, self.right, self.bottom)

    def ltwh(self):
        return (self.left, self.top, self.w, self.h)

    def as_array(self):
        return np.array([self.cx, self.cy, self.w, self.h], dtype=np.float64)

    def flipped(self, frame_w):
        """Mirror horizontally inside a frame of width ``frame_w``."""
        return BBox(frame_w - self.cx, self.cy, self.w, self.h)


def boxes_to_array(boxes):
    """Stack BBoxes into an (N, 4) float64 array."""
    if len(boxes) == 0:
        return np.zeros((0, 4), dtype=np.float64)
    return np.array([[b.cx, b.cy, b.w, b.h] for b in boxes], dtype=np.float64)


def _corners(boxes):
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    half_w = boxes[:, 2] / 2.0
    half_h = boxes[:, 3] / 2.0
    return (boxes[:, 0] - half_w, boxes[:, 1] - half_h,
            boxes[:, 0] + half_w, boxes[:, 1] + half_h)


def _overlap(lo_a, hi_a, lo_b, hi_b):
    return np.clip(np.minimum(hi_a[:, None], hi_b[None, :]) - np.maximum(lo_a[:, None], lo_b[None, :]), 0.0, None)


def iou_matrix(boxes_a, boxes_b):
    """Pairwise IoU between (N, 4) and (M, 4) center-form boxes -> (N, M)."""
    l1, t1, r1, b1 = _corners(boxes_a)
    l2, t2, r2, b2 = _corners(boxes_b)
    inter = _overlap(l1, r1, l2, r2) * _overlap(t1, b1, t2, b2)
    area_a = (r1 - l1) * (b1 - t1)
    area_b = (r2 - l2) * (b2 - t2)
    union = area_a[:, None] + area_b[None, :] - inter
    return np.clip(inter / union, 0.0, 1.0)


def iou_scale_matrix(boxes_a, boxes_b):
    """IoU after moving every center to the origin, so only (w, h) matter."""
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    inter = np.minimum(a[:, None, 2], b[None, :, 2]) * np.minimum(a[:, None, 3], b[None, :, 3])
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None, :] - inter
    return np.clip(inter / union, 0.0, 1.0)


def height_iou_matrix(boxes_a, boxes_b):
    """1-d IoU of the vertical extents [top, bottom]."""
    _, t1, _, b1 = _corners(boxes_a)
    _, t2, _, b2 = _corners(boxes_b)
    inter = _overlap(t1, b1, t2, b2)
    union = np.maximum(b1[:, None], b2[None, :]) - np.minimum(t1[:, None], t2[None, :])
    return np.clip(inter / union, 0.0, 1.0)


def hmiou_matrix(boxes_a, boxes_b):
    """Height-modulated IoU: vertical-extent IoU times plain IoU."""
    return height_iou_matrix(boxes_a, boxes_b) * iou_matrix(boxes_a, boxes_b)


def iou(a, b):
    return float(iou_matrix(a.as_array(), b.as_array())[0, 0])


def iou_scale(a, b):
    return float(iou_scale_matrix(a.as_array(), b.as_array())[0, 0])


def hmiou(a, b):
    return float(hmiou_matrix(a.as_array(), b.as_array())[0, 0])


def normalize_box(box, frame_w, frame_h):
    """Divide by the frame size and clamp each field to [0, 1]."""
    if not (frame_w > 0 and frame_h > 0):
        raise DataError(f"frame size must be positive, got {frame_w}x{frame_h}")
    scale = np.array([frame_w, frame_h, frame_w, frame_h], dtype=np.float64)
    return np.clip(box.as_array() / scale, 0.0, 1.0)


def normalize_boxes(boxes, frame_w, frame_h):
    """Vectorized normalize_box over an (N, 4) array."""
    if not (frame_w > 0 and frame_h > 0):
        raise DataError(f"frame size must be positive, got {frame_w}x{frame_h}")
    scale = np.array([frame_w, frame_h, frame_w, frame_h], dtype=np.float64)
    return np.clip(np.asarray(boxes, dtype=np.float64).reshape(-1, 4) / scale, 0.0, 1.0)


if __name__ == '__main__':
    a = BBox(0, 0, 2, 2)
    b = BBox(1, 1, 2, 2)
    print(f"iou={iou(a, b):.6f} iou_scale={iou_scale(a, b):.6f} hmiou={hmiou(a, b):.6f}")
