"""
Detections and the containers built from them

A sequence is handled as ``frames``: dict frame_number -> list[Detection]
(frames ascending). A set of trajectories is ``trajectories``: dict tid ->
list[Detection] ordered by frame.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from src.problem.geometry import BBox
from src.utils.errors import DataError


@dataclass
class Detection:
    """
    One object in one frame

    Args:
        frame: 1-based frame number
        tid: tracking identity, -1 when unassigned
        bbox: center-form box in pixels
        conf: confidence in [0, 1]
        extra: the three trailing MOT columns (class/visibility or x/y/z), passed through
        appearance: optional 12288-long raw vector standing in for an image patch
    """

    frame: int
    tid: int
    bbox: BBox
    conf: float = 1.0
    extra: tuple = (-1.0, -1.0, -1.0)
    appearance: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.frame < 1:
            raise DataError(f"frame numbers are 1-based, got {self.frame}")

    def with_tid(self, tid):
        return replace(self, tid=tid)


def group_by_frame(detections):
    """Group detections by frame, frames ascending, input order kept within a frame."""
    frames = {}
    for det in detections:
        frames.setdefault(det.frame, []).append(det)
    return {f: frames[f] for f in sorted(frames)}


def frames_to_trajectories(frames):
    """Collect per-frame detections into tid -> detections; tid -1 is skipped."""
    trajectories = {}
    for frame in sorted(frames):
        for det in frames[frame]:
            if det.tid < 0:
                continue
            trajectories.setdefault(det.tid, []).append(det)
    return {tid: trajectories[tid] for tid in sorted(trajectories)}


def trajectories_to_frames(trajectories):
    """Inverse of frames_to_trajectories; within a frame, detections are ordered by tid."""
    detections = [det for tid in sorted(trajectories) for det in trajectories[tid]]
    detections.sort(key=lambda d: (d.frame, d.tid))
    return group_by_frame(detections)


if __name__ == '__main__':
    dets = [Detection(1, 3, BBox(10, 10, 4, 4)), Detection(2, 3, BBox(12, 10, 4, 4))]
    print(frames_to_trajectories(group_by_frame(dets)))
