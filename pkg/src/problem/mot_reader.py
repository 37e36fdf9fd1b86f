"""
MOTChallenge text files and sequence directories

Line layout: ``frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z``.
On disk boxes are left/top/width/height; in memory they are center form.
This module is the only place the two conventions meet.

A sequence directory holds::

    seqinfo.ini        [Sequence] name, imWidth, imHeight, seqLength
    gt/gt.txt          ground truth with identities
    det/det.txt        detections, id = -1
    appearance.npz     vectors (M, 12288) float32, gt_source / det_source (int32)
                       aligned with the line order of gt.txt / det.txt;
                       -1 means no appearance vector for that line
"""
import configparser
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from src.problem.detection import Detection, group_by_frame, trajectories_to_frames
from src.problem.geometry import BBox
from src.utils import LOGGER
from src.utils.errors import DataError

MIN_FIELDS = 7
N_FIELDS = 10
RESULT_EXTRA = (-1, -1, -1)


@dataclass
class MOTData:
    """Parsed MOT file: detections grouped by frame plus parser counters"""

    frames: dict
    n_clamped: int = 0

    @property
    def n_detections(self):
        return sum(len(v) for v in self.frames.values())


@dataclass
class Sequence:
    """A video sequence given as detection files (no pixels)"""

    name: str
    width: float
    height: float
    length: int
    gt: dict = field(default_factory=dict)
    det: dict = field(default_factory=dict)


def _read_text(source):
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    elif hasattr(source, "read"):
        data = source.read()
        if isinstance(data, str):
            return data
    else:
        data = Path(source).read_bytes()
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as e:
        line = data[:e.start].count(b"\n") + 1
        raise DataError("file is not valid UTF-8 text", line=line) from None


def parse_line(line, number):
    """Parse one MOT line into a Detection plus a flag telling whether conf was clamped."""
    parts = [p.strip() for p in line.split(",")]
    if len(parts) < MIN_FIELDS:
        raise DataError(f"expected at least {MIN_FIELDS} comma-separated fields, got {len(parts)}", line=number)
    if len(parts) > N_FIELDS:
        raise DataError(f"expected at most {N_FIELDS} fields, got {len(parts)}", line=number)
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise DataError(f"non-numeric field in {line!r}", line=number) from None
    if not all(np.isfinite(values)):
        raise DataError(f"non-finite field in {line!r}", line=number)

    frame, tid = values[0], values[1]
    if frame != int(frame) or tid != int(tid):
        raise DataError("frame and id must be integers", line=number)
    if frame < 1:
        raise DataError(f"frame numbers are 1-based, got {int(frame)}", line=number)
    left, top, width, height, conf = values[2:7]
    if width <= 0 or height <= 0:
        raise DataError(f"box width and height must be positive, got {width}x{height}", line=number)

    clamped = not (0.0 <= conf <= 1.0)
    conf = min(max(conf, 0.0), 1.0)
    extra = tuple(values[7:]) + (-1.0,) * (N_FIELDS - len(values))
    try:
        det = Detection(int(frame), int(tid), BBox.from_ltwh(left, top, width, height), conf, extra)
    except DataError as e:
        raise DataError(str(e), line=number) from None
    return det, clamped


def parse_mot(source):
    """
    Parse a MOTChallenge CSV file

    Args:
        source: path, bytes, or a readable stream

    Returns:
        MOTData whose ``frames`` maps frame -> detections (frames ascending,
        file order kept inside a frame)
    """
    text = _read_text(source)
    detections = []
    n_clamped = 0
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        det, clamped = parse_line(line, number)
        n_clamped += clamped
        detections.append(det)

    if n_clamped:
        LOGGER.warning(f"{n_clamped} confidence values outside [0, 1] were clamped")
    return MOTData(group_by_frame(detections), n_clamped)


def format_line(det, extra=None):
    left, top, width, height = det.bbox.ltwh()
    extra = ",".join(f"{v:g}" for v in (det.extra if extra is None else extra))
    return f"{det.frame},{det.tid},{left:.6f},{top:.6f},{width:.6f},{height:.6f},{det.conf:.6f},{extra}"


def write_mot(trajectories):
    """
    Serialize finished trajectories (tid -> detections) as MOT text

    Lines are sorted by (frame, tid) and end with -1,-1,-1; tid -1 is never written.
    """
    frames = trajectories_to_frames({tid: dets for tid, dets in trajectories.items() if tid >= 0})
    buffer = io.StringIO()
    for frame in frames:
        for det in frames[frame]:
            buffer.write(format_line(det, RESULT_EXTRA) + "\n")
    return buffer.getvalue().encode("utf-8")


def write_detections(frames):
    """Serialize per-frame detections in the given order, identities as stored."""
    buffer = io.StringIO()
    for frame in sorted(frames):
        for det in frames[frame]:
            buffer.write(format_line(det) + "\n")
    return buffer.getvalue().encode("utf-8")


def _appearance_table(frames_list):
    """Deduplicate appearance arrays by identity; return vectors and per-line source indices."""
    index = {}
    vectors = []
    sources = []
    for frames in frames_list:
        src = []
        for frame in sorted(frames):
            for det in frames[frame]:
                if det.appearance is None:
                    src.append(-1)
                    continue
                key = id(det.appearance)
                if key not in index:
                    index[key] = len(vectors)
                    vectors.append(np.asarray(det.appearance, dtype=np.float32))
                src.append(index[key])
        sources.append(np.asarray(src, dtype=np.int32))
    if vectors:
        table = np.stack(vectors)
    else:
        table = np.zeros((0, 0), dtype=np.float32)
    return table, sources


def save_sequence(directory, sequence):
    """Write a Sequence as a MOTChallenge-style directory plus appearance sidecar."""
    directory = Path(directory)
    (directory / "gt").mkdir(parents=True, exist_ok=True)
    (directory / "det").mkdir(parents=True, exist_ok=True)

    info = configparser.ConfigParser()
    info.optionxform = str
    info["Sequence"] = {
        "name": sequence.name,
        "imWidth": f"{sequence.width:g}",
        "imHeight": f"{sequence.height:g}",
        "seqLength": str(sequence.length),
    }
    with open(directory / "seqinfo.ini", "w") as f:
        info.write(f)

    (directory / "gt" / "gt.txt").write_bytes(write_detections(sequence.gt))
    (directory / "det" / "det.txt").write_bytes(write_detections(sequence.det))

    vectors, (gt_source, det_source) = _appearance_table([sequence.gt, sequence.det])
    if len(vectors):
        np.savez(directory / "appearance.npz", vectors=vectors, gt_source=gt_source, det_source=det_source)
    return directory


def _attach(frames, vectors, source, what):
    lines = [det for frame in sorted(frames) for det in frames[frame]]
    if len(source) != len(lines):
        raise DataError(f"appearance sidecar has {len(source)} {what} entries for {len(lines)} lines")
    for det, s in zip(lines, source):
        if s >= 0:
            det.appearance = vectors[s]


def attach_appearance(frames, sidecar, which="det"):
    """Attach vectors from an appearance.npz to frames parsed from the matching gt/det file."""
    with np.load(sidecar) as data:
        _attach(frames, data["vectors"], data[f"{which}_source"], which)
    return frames


def load_sequence(directory):
    """Read a sequence directory written by save_sequence (or a plain MOTChallenge one)."""
    directory = Path(directory)
    info = configparser.ConfigParser()
    if not info.read(directory / "seqinfo.ini"):
        raise DataError(f"{directory}: missing seqinfo.ini")
    try:
        section = info["Sequence"]
        width = float(section["imWidth"])
        height = float(section["imHeight"])
        length = int(section.get("seqLength", "0"))
    except (KeyError, ValueError) as e:
        raise DataError(f"{directory}/seqinfo.ini: {e}") from None
    name = section.get("name", directory.name)

    gt_path = directory / "gt" / "gt.txt"
    det_path = directory / "det" / "det.txt"
    gt = parse_mot(gt_path).frames if gt_path.exists() else {}
    det = parse_mot(det_path).frames if det_path.exists() else {}

    sidecar = directory / "appearance.npz"
    if sidecar.exists():
        with np.load(sidecar) as data:
            vectors = data["vectors"]
            _attach(gt, vectors, data["gt_source"], "gt")
            _attach(det, vectors, data["det_source"], "det")
    return Sequence(name, width, height, length, gt, det)


def list_sequences(root):
    """Sequence directories under ``root`` (or ``root`` itself), sorted by name."""
    root = Path(root)
    if (root / "seqinfo.ini").exists():
        return [root]
    return sorted(p for p in root.iterdir() if (p / "seqinfo.ini").exists())


if __name__ == '__main__':
    data = parse_mot(b"1,-1,10,20,30,40,0.9,-1,-1,-1\n")
    print(data.frames)
