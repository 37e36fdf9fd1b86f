import numpy as np
import pytest

from src.problem.detection import Detection, frames_to_trajectories
from src.problem.geometry import BBox
from src.problem.mot_reader import (Sequence, attach_appearance, list_sequences, load_sequence, parse_mot,
                                    save_sequence, write_detections, write_mot)
from src.utils.errors import DataError


def test_parse_example_line():
    data = parse_mot(b"1,-1,10,20,30,40,0.9,-1,-1,-1\n")
    (det,) = data.frames[1]
    assert det.tid == -1
    assert (det.bbox.cx, det.bbox.cy, det.bbox.w, det.bbox.h) == (25.0, 40.0, 30.0, 40.0)
    assert det.conf == pytest.approx(0.9)
    assert det.extra == (-1.0, -1.0, -1.0)


def test_empty_input():
    assert parse_mot(b"").frames == {}
    assert parse_mot(b"\n\n").n_detections == 0


def test_seven_field_lines_get_default_extras():
    (det,) = parse_mot(b"3,2,0,0,5,5,1").frames[3]
    assert det.extra == (-1.0, -1.0, -1.0)


@pytest.mark.parametrize("text, line", [
    (b"1,1,0,0,10,10,1\n2,1,0,0,0,10,1\n", 2),
    (b"1,1,0,0,10,10,1\n\n1,2,0,0,10,x,1\n", 3),
    (b"1,1,0,0,10\n", 1),
    (b"0,1,0,0,10,10,1\n", 1),
    (b"1,1,0,0,10,10,1\n1,1.5,0,0,10,10,1\n", 2),
    (b"1,1,0,0,nan,10,1\n", 1),
    (b"1,1,0,0,10,10,1,-1,-1,-1,7\n", 1),
    (b"1,-1,0,0,10,10,0.9\n2,-1,1.7e308,0,1.7e308,10,0.9\n", 2),
])
def test_malformed_lines_name_their_line(text, line):
    with pytest.raises(DataError) as err:
        parse_mot(text)
    assert err.value.line == line
    assert str(err.value).startswith(f"line {line}:")


def test_invalid_utf8_is_a_data_error():
    with pytest.raises(DataError):
        parse_mot(b"1,1,0,0,10,10,1\n\xff\xfe\n")


def test_confidence_is_clamped(caplog):
    data = parse_mot(b"1,-1,0,0,10,10,1.7\n1,-1,5,5,10,10,-0.2\n")
    assert [d.conf for d in data.frames[1]] == [1.0, 0.0]
    assert data.n_clamped == 2
    assert "clamped" in caplog.text


def test_round_trip_within_tolerance(rng):
    trajectories = {}
    for tid in (1, 2, 7):
        trajectories[tid] = [Detection(f, tid, BBox(*rng.uniform(10, 300, 2), *rng.uniform(5, 50, 2)),
                                       float(rng.random())) for f in range(1, 6)]
    parsed = frames_to_trajectories(parse_mot(write_mot(trajectories)).frames)
    assert sorted(parsed) == [1, 2, 7]
    for tid, dets in trajectories.items():
        for a, b in zip(dets, parsed[tid]):
            assert a.frame == b.frame
            assert np.allclose(a.bbox.as_array(), b.bbox.as_array(), atol=1e-4)
            assert abs(a.conf - b.conf) < 1e-4


def test_output_order_and_unassigned_ids():
    box = BBox(20, 20, 10, 10)
    trajectories = {
        5: [Detection(2, 5, box), Detection(1, 5, box)],
        3: [Detection(2, 3, box)],
        -1: [Detection(1, -1, box)],
    }
    lines = write_mot(trajectories).decode().splitlines()
    assert [tuple(map(int, l.split(",")[:2])) for l in lines] == [(1, 5), (2, 3), (2, 5)]
    assert write_mot(trajectories) == write_mot(dict(reversed(list(trajectories.items()))))


def test_single_line_output():
    text = write_mot({4: [Detection(1, 4, BBox.from_ltwh(10, 20, 30, 40), 0.5)]}).decode()
    assert text.count("\n") == 1
    fields = text.strip().split(",")
    assert fields[:2] == ["1", "4"]
    assert [float(v) for v in fields[2:7]] == [10.0, 20.0, 30.0, 40.0, 0.5]


def make_sequence(rng):
    vectors = [rng.random(12288).astype(np.float32) for _ in range(2)]
    gt = {f: [Detection(f, k + 1, BBox(30 + 5 * f, 40 + 10 * k, 12, 16), appearance=vectors[k])
              for k in range(2)] for f in (1, 2, 3)}
    det = {f: [Detection(f, -1, d.bbox, 0.8, appearance=d.appearance) for d in dets] for f, dets in gt.items()}
    det[2].append(Detection(2, -1, BBox(90, 90, 8, 8), 0.2))
    return Sequence("toy", 160, 120, 3, gt=gt, det=det)


def test_sequence_directory_round_trip(tmp_path, rng):
    seq = make_sequence(rng)
    save_sequence(tmp_path / "toy", seq)
    assert list_sequences(tmp_path) == [tmp_path / "toy"]
    assert list_sequences(tmp_path / "toy") == [tmp_path / "toy"]

    loaded = load_sequence(tmp_path / "toy")
    assert (loaded.name, loaded.width, loaded.height, loaded.length) == ("toy", 160, 120, 3)
    for frame in (1, 2, 3):
        for a, b in zip(seq.gt[frame], loaded.gt[frame]):
            assert a.tid == b.tid
            assert np.array_equal(a.appearance, b.appearance)
    assert loaded.det[2][-1].appearance is None
    assert np.array_equal(loaded.det[1][0].appearance, seq.gt[1][0].appearance)


def test_appearance_sidecar_for_a_bare_file(tmp_path, rng):
    seq = make_sequence(rng)
    save_sequence(tmp_path, seq)
    frames = parse_mot(tmp_path / "det" / "det.txt").frames
    attach_appearance(frames, tmp_path / "appearance.npz", "det")
    assert sum(d.appearance is not None for dets in frames.values() for d in dets) == 6

    frames = parse_mot(write_detections({1: seq.det[1]})).frames
    with pytest.raises(DataError):
        attach_appearance(frames, tmp_path / "appearance.npz", "det")


def test_missing_seqinfo(tmp_path):
    with pytest.raises(DataError):
        load_sequence(tmp_path)
    assert list_sequences(tmp_path) == []


def test_result_lines_end_with_unused_columns():
    det = Detection(1, 4, BBox(20, 20, 10, 10), 0.5, extra=(1.0, 0.25, -1.0))
    assert write_mot({4: [det]}).decode().strip().endswith(",-1,-1,-1")
    assert write_detections({1: [det]}).decode().strip().endswith(",1,0.25,-1")
