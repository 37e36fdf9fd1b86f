"""
Online tracker: sliding token window, one association per frame

Per frame: filter detections by tau_det, tokenize them, run the model on
<bos> + window + current tokens, build A * W from the embeddings and boxes,
solve it with the Hungarian algorithm, then update the tracklet states:

- matched tracklets take the detection and become Track
- unmatched tracklets are retired when New or lost for more than window_T
  frames, otherwise they become Lost
- unmatched detections with conf >= tau_new start New tracklets

Only objects appended to a tracklet (matched or newborn) enter the window.
"""
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import torch

from src.algorithms.association import MATCH_EPS, AffinityMatrix, affinity, hungarian_max, similarity, weights
from src.algorithms.model import BOS_FRAME, TokenSequence
from src.problem.geometry import boxes_to_array, normalize_boxes
from src.operators.tokenizer import FrameImage, detection_raw
from src.utils import LOGGER
from src.utils.errors import DataError


@dataclass
class TrackerConfig:
    tau_det: float = 0.1
    tau_new: float = 0.6
    window_T: int = 30
    match_eps: float = MATCH_EPS
    w_floor: float = 0.05
    use_compensation: bool = True
    use_hmiou: bool = True
    use_traj_conf: bool = True
    use_det_conf: bool = True

    def __post_init__(self):
        if not (0.0 <= self.tau_det <= 1.0 and 0.0 <= self.tau_new <= 1.0):
            raise ValueError(f"thresholds must lie in [0, 1]: tau_det={self.tau_det}, tau_new={self.tau_new}")
        if self.tau_new < self.tau_det:
            raise ValueError(f"tau_new={self.tau_new} must be >= tau_det={self.tau_det}")
        if self.window_T < 1:
            raise ValueError(f"window_T must be >= 1, got {self.window_T}")
        if self.w_floor < 0.0 or self.match_eps < 0.0:
            raise ValueError("w_floor and match_eps must be non-negative")


class TrackState(Enum):
    Track = "track"
    Lost = "lost"
    New = "new"


@dataclass
class Tracklet:
    """One trajectory under construction"""

    tid: int
    state: TrackState
    history: list = field(default_factory=list)  # (frame, Detection)

    @property
    def last(self):
        return self.history[-1][1]

    @property
    def last_box(self):
        return self.last.bbox

    @property
    def last_conf(self):
        return self.last.conf

    @property
    def last_frame(self):
        return self.history[-1][0]

    def append(self, frame, det):
        if self.history and frame <= self.last_frame:
            raise DataError(f"tracklet {self.tid}: frame {frame} does not follow {self.last_frame}")
        self.history.append((frame, det.with_tid(self.tid)))

    def lost_gap(self, frame):
        return frame - self.last_frame

    def detections(self):
        return [det for _, det in self.history]


@dataclass
class WindowEntry:
    frame: int
    tid: int
    token: torch.Tensor
    box: object
    conf: float


class WindowBuffer:
    """Tokens of the objects appended to trajectories during the last window_T frames"""

    def __init__(self, window_T):
        self.window_T = window_T
        self.entries = deque()

    def __len__(self):
        return len(self.entries)

    def evict(self, current_frame):
        """Drop entries from frames older than current_frame - window_T."""
        oldest = current_frame - self.window_T
        while self.entries and self.entries[0].frame < oldest:
            self.entries.popleft()

    def extend(self, entries):
        for entry in sorted(entries, key=lambda e: e.tid):
            if self.entries and entry.frame < self.entries[-1].frame:
                raise DataError("window entries must be appended in frame order")
            self.entries.append(entry)


def _newborn_order(dets, indices):
    """Canonical order for handing out new identities, independent of input order."""
    def key(i):
        b = dets[i].bbox
        return (-dets[i].conf, b.cx, b.cy, b.w, b.h, i)
    return sorted(indices, key=key)


class PuTRTracker:
    """
    Runtime manager for one video sequence

    Args:
        model: PuTR, used read-only
        config: TrackerConfig
        frame_size: (width, height) in pixels, used to normalize boxes
    """

    def __init__(self, model, config=None, frame_size=None):
        self.model = model.eval()
        self.config = config or TrackerConfig()
        if model.config.max_window < self.config.window_T + 1:
            raise ValueError(f"model max_window={model.config.max_window} cannot hold "
                             f"window_T + 1 = {self.config.window_T + 1} frames")
        self.frame_size = frame_size
        self.window = WindowBuffer(self.config.window_T)
        self.active = {}
        self.finished = {}
        self.next_tid = 1
        self.last_frame = None

    def _frame_size(self, image):
        if image is not None:
            return image.width, image.height
        if self.frame_size is None:
            raise DataError("frame_size is required when frames are given without images")
        return self.frame_size

    def _retire(self, tracklet, reason):
        LOGGER.debug(f"Retiring tracklet {tracklet.tid} ({reason})")
        self.active.pop(tracklet.tid, None)
        self.finished[tracklet.tid] = tracklet

    @torch.no_grad()
    def _tokenize(self, dets, image):
        if not dets:
            return torch.zeros(0, self.model.config.d_model)
        raw = np.stack([detection_raw(d, image) for d in dets])
        dtype = self.model.embed.weight.dtype
        return self.model.embed(torch.as_tensor(raw, dtype=dtype))

    @torch.no_grad()
    def _affinity(self, frame_number, dets, tokens, width, height):
        """Run the model on the window plus current tokens and build A and W."""
        T = self.config.window_T
        entries = list(self.window.entries)
        track_ids = sorted(self.active)
        row_of = {tid: k for k, tid in enumerate(track_ids)}
        d_model = self.model.config.d_model

        past_boxes = boxes_to_array([e.box for e in entries])
        cur_boxes = boxes_to_array([d.bbox for d in dets])
        frame_index = [BOS_FRAME] + [e.frame - (frame_number - T) for e in entries] + [T] * len(dets)
        norm = np.concatenate([np.zeros((1, 4)), normalize_boxes(past_boxes, width, height),
                               normalize_boxes(cur_boxes, width, height)])
        dtype = self.model.embed.weight.dtype
        tokens_all = torch.cat([torch.zeros(1, d_model, dtype=dtype)]
                               + [e.token.reshape(1, -1) for e in entries] + [tokens.to(dtype)])
        seq = TokenSequence(tokens_all, torch.tensor(frame_index), torch.as_tensor(norm),
                            torch.tensor([-1] + [e.tid for e in entries] + [-1] * len(dets)))
        Z = self.model(seq).double().numpy()

        # tokens of retired tracklets stay as context but get no row in S
        P = len(entries)
        rows = [k for k, e in enumerate(entries) if e.tid in row_of]
        last_boxes = boxes_to_array([self.active[entries[k].tid].last_box for k in rows])
        S = similarity(Z[1:1 + P][rows], Z[1 + P:], past_boxes[rows], cur_boxes, last_boxes,
                       use_compensation=self.config.use_compensation)
        A = affinity(S, [row_of[entries[k].tid] for k in rows], len(track_ids))
        W = weights(
            boxes_to_array([self.active[tid].last_box for tid in track_ids]),
            [self.active[tid].last_conf for tid in track_ids],
            cur_boxes, [d.conf for d in dets],
            w_floor=self.config.w_floor,
            use_hmiou=self.config.use_hmiou,
            use_traj_conf=self.config.use_traj_conf,
            use_det_conf=self.config.use_det_conf,
        )
        return AffinityMatrix(A, W, track_ids)

    def step(self, frame_number, detections, image=None):
        """
        Associate one frame

        Args:
            frame_number: strictly increasing frame number
            detections: list of Detection (tid ignored)
            image: optional FrameImage; without it every detection needs an appearance vector

        Returns:
            list of tids aligned with ``detections``; -1 for discarded detections
        """
        if self.last_frame is not None and frame_number <= self.last_frame:
            raise DataError(f"frame {frame_number} received after frame {self.last_frame}")
        if image is not None and not isinstance(image, FrameImage):
            image = FrameImage(np.asarray(image))
        width, height = self._frame_size(image)
        for det in detections:
            b = det.bbox
            if b.right <= 0 or b.bottom <= 0 or b.left >= width or b.top >= height:
                raise DataError(f"frame {frame_number}: box {b.ltrb()} lies outside the {width}x{height} frame")
        self.last_frame = frame_number
        cfg = self.config

        keep = [i for i, d in enumerate(detections) if d.conf >= cfg.tau_det]
        dets = [detections[i] for i in keep]
        tokens = self._tokenize(dets, image)

        self.window.evict(frame_number)
        for tracklet in list(self.active.values()):
            if tracklet.lost_gap(frame_number) > cfg.window_T:
                self._retire(tracklet, "lost gap exceeded")

        matches, unmatched_tracks, unmatched_dets = [], sorted(self.active), list(range(len(dets)))
        if self.active and dets:
            aff = self._affinity(frame_number, dets, tokens, width, height)
            assignment = hungarian_max(aff.score, cfg.match_eps)
            matches = [(aff.track_ids[r], c) for r, c in assignment.matches]
            unmatched_tracks = [aff.track_ids[r] for r in assignment.unmatched_rows]
            unmatched_dets = assignment.unmatched_cols

        tids = [-1] * len(detections)
        new_entries = []
        for tid, col in matches:
            tracklet = self.active[tid]
            tracklet.append(frame_number, dets[col])
            tracklet.state = TrackState.Track
            tids[keep[col]] = tid
            new_entries.append(WindowEntry(frame_number, tid, tokens[col], dets[col].bbox, dets[col].conf))

        for tid in unmatched_tracks:
            tracklet = self.active[tid]
            if tracklet.state == TrackState.New:
                self._retire(tracklet, "unconfirmed")
            elif tracklet.lost_gap(frame_number) > cfg.window_T:
                self._retire(tracklet, "lost gap exceeded")
            else:
                tracklet.state = TrackState.Lost

        newborn = [c for c in unmatched_dets if dets[c].conf >= cfg.tau_new]
        for col in _newborn_order(dets, newborn):
            tid = self.next_tid
            self.next_tid += 1
            tracklet = Tracklet(tid, TrackState.New)
            tracklet.append(frame_number, dets[col])
            self.active[tid] = tracklet
            tids[keep[col]] = tid
            new_entries.append(WindowEntry(frame_number, tid, tokens[col], dets[col].bbox, dets[col].conf))

        self.window.extend(new_entries)
        return tids

    def finish(self):
        """All trajectories, finished and still active: tid -> detections ordered by frame."""
        everything = {**self.finished, **self.active}
        return {tid: everything[tid].detections() for tid in sorted(everything)}


def track_sequence(tracker, frames, images=None, first_frame=None, last_frame=None, log_every=100):
    """
    Drive a tracker over every frame number in [first_frame, last_frame]

    Frames missing from ``frames`` are stepped with no detections so lost gaps
    advance. ``images`` may be a dict or callable frame -> FrameImage.
    """
    if not frames and first_frame is None:
        return tracker.finish()
    first = min(frames) if first_frame is None else first_frame
    last = max(frames) if last_frame is None else last_frame
    for frame in range(first, last + 1):
        image = None
        if images is not None:
            image = images(frame) if callable(images) else images.get(frame)
        tracker.step(frame, frames.get(frame, []), image)
        if log_every and (frame - first + 1) % log_every == 0:
            LOGGER.info(f"Frame {frame}/{last} - active tracklets {len(tracker.active)}")
    return tracker.finish()
