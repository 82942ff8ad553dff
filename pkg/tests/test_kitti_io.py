from __future__ import annotations

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semgrid.kitti_io import (
    CalibrationError,
    LabelMismatchError,
    MalformedScanError,
    PointCloud,
    Pose,
    PoseParseError,
    decode_label_words,
    open_sequence,
    read_labels,
    read_point_cloud,
    read_poses,
    read_scan,
    relative_transform,
    write_scan,
    write_sequence_meta,
)

IDENTITY_ROW = "1 0 0 0 0 1 0 0 0 0 1 0"


def _calib(path, tr_row=IDENTITY_ROW):
    path.write_text("P0: 1 0 0 0 0 1 0 0 0 0 1 0\nTr: " + tr_row + "\n")
    return path


def test_single_record(tmp_path):
    p = tmp_path / "a.bin"
    p.write_bytes(struct.pack("<4f", 1.0, 2.0, 3.0, 0.5))
    c = read_point_cloud(p)
    assert len(c) == 1
    np.testing.assert_array_equal(c.xyz, [[1.0, 2.0, 3.0]])
    assert c.intensity[0] == 0.5
    assert not c.labeled


def test_empty_file(tmp_path):
    p = tmp_path / "a.bin"
    p.write_bytes(b"")
    assert len(read_point_cloud(p)) == 0


def test_17_bytes_is_malformed(tmp_path):
    p = tmp_path / "a.bin"
    p.write_bytes(b"\0" * 17)
    with pytest.raises(MalformedScanError):
        read_point_cloud(p)


def test_missing_file(tmp_path):
    with pytest.raises(OSError):
        read_point_cloud(tmp_path / "nope.bin")


def test_non_finite_points_dropped_and_labels_follow(tmp_path, caplog):
    p = tmp_path / "a.bin"
    rec = np.array([[1, 0, 0, 0.1], [np.nan, 0, 0, 0.2], [3, 0, 0, np.inf], [4, 0, 0, 0.4]], dtype="<f4")
    p.write_bytes(rec.tobytes())
    lab = tmp_path / "a.label"
    lab.write_bytes(np.array([10, 40, 48, 70], dtype="<u4").tobytes())
    c = read_scan(p, lab)
    assert len(c) == 2 and c.dropped == 2 and c.n_records == 4
    np.testing.assert_array_equal(c.xyz[:, 0], [1, 4])
    np.testing.assert_array_equal(c.semantic, [10, 70])
    assert "non-finite" in caplog.text


@pytest.mark.parametrize("word,sem,inst", [(0x0000000A, 10, 0), (0x002000FC, 252, 32)])
def test_label_words(tmp_path, word, sem, inst):
    p = tmp_path / "a.label"
    p.write_bytes(np.array([word], dtype="<u4").tobytes())
    s, i = read_labels(p, 1)
    assert (int(s[0]), int(i[0])) == (sem, inst)


def test_label_count_mismatch(tmp_path):
    p = tmp_path / "a.label"
    p.write_bytes(np.zeros(3, dtype="<u4").tobytes())
    with pytest.raises(LabelMismatchError):
        read_labels(p, 4)


@given(st.lists(st.integers(0, 2**32 - 1), max_size=50))
def test_decode_label_words_bitfields(words):
    s, i = decode_label_words(np.array(words, dtype=np.uint32))
    for w, a, b in zip(words, s.tolist(), i.tolist()):
        assert a == w & 0xFFFF and b == w >> 16


def test_identity_pose(tmp_path):
    (tmp_path / "poses.txt").write_text(IDENTITY_ROW + "\n")
    (pose,) = read_poses(tmp_path / "poses.txt", _calib(tmp_path / "calib.txt"))
    assert pose.allclose(Pose.identity())


def test_translation_pose(tmp_path):
    (tmp_path / "poses.txt").write_text("1 0 0 5 0 1 0 0 0 0 1 0\n")
    (pose,) = read_poses(tmp_path / "poses.txt", _calib(tmp_path / "calib.txt"))
    assert pose.allclose(Pose.from_translation((5, 0, 0)))


def test_pose_times_calibration(tmp_path):
    (tmp_path / "poses.txt").write_text(IDENTITY_ROW + "\n")
    calib = _calib(tmp_path / "calib.txt", "1 0 0 0 0 1 0 0 0 0 1 1")
    (pose,) = read_poses(tmp_path / "poses.txt", calib)
    assert pose.allclose(Pose.from_translation((0, 0, 1)))


def test_pose_line_with_eleven_numbers(tmp_path):
    (tmp_path / "poses.txt").write_text("1 0 0 0 0 1 0 0 0 0 1\n")
    with pytest.raises(PoseParseError):
        read_poses(tmp_path / "poses.txt", _calib(tmp_path / "calib.txt"))


def test_missing_tr(tmp_path):
    (tmp_path / "poses.txt").write_text(IDENTITY_ROW + "\n")
    (tmp_path / "calib.txt").write_text("P0: 1 0 0 0 0 1 0 0 0 0 1 0\n")
    with pytest.raises(CalibrationError):
        read_poses(tmp_path / "poses.txt", tmp_path / "calib.txt")


def test_relative_transform_examples():
    poses = [Pose.from_translation((5, 0, 0)), Pose.from_translation((8, 0, 0))]
    assert relative_transform(poses, 0, 0).allclose(Pose.identity())
    assert relative_transform(poses, 0, 1).allclose(Pose.from_translation((3, 0, 0)))

    t_i = np.array([1.0, 2.0, 0.5])
    rot = Pose.from_yaw(np.pi / 2, t_i)
    rel = relative_transform([rot, Pose.identity()], 0, 1)
    np.testing.assert_allclose(rel.rotation, rot.rotation.T, atol=1e-12)
    np.testing.assert_allclose(rel.translation, rot.rotation.T @ -t_i, atol=1e-12)


def test_relative_transform_bad_index():
    with pytest.raises(IndexError):
        relative_transform([Pose.identity()], 0, 1)


_angles = st.floats(-np.pi, np.pi)
_coords = st.floats(-200, 200)
_poses = st.builds(
    lambda yaw, pitch, x, y, z: Pose.from_yaw(yaw, (x, y, z)).compose(
        Pose(np.array([[1, 0, 0], [0, np.cos(pitch), -np.sin(pitch)], [0, np.sin(pitch), np.cos(pitch)]]), (0, 0, 0))
    ),
    _angles,
    _angles,
    _coords,
    _coords,
    _coords,
)


@given(st.lists(_poses, min_size=3, max_size=3))
def test_relative_transform_round_trip_and_chain(poses):
    for p in poses:
        assert p.is_orthonormal()
        assert p.compose(p.inverse()).allclose(Pose.identity())
    there = relative_transform(poses, 0, 1)
    back = relative_transform(poses, 1, 0)
    assert there.compose(back).allclose(Pose.identity())
    chained = relative_transform(poses, 0, 1).compose(relative_transform(poses, 1, 2))
    assert chained.allclose(relative_transform(poses, 0, 2))


@settings(max_examples=30)
@given(st.integers(0, 40))
def test_parsing_is_total(tmp_path_factory, n):
    p = tmp_path_factory.mktemp("scan") / "a.bin"
    rng = np.random.default_rng(n)
    p.write_bytes(rng.normal(size=(n, 4)).astype("<f4").tobytes())
    assert len(read_point_cloud(p)) == p.stat().st_size // 16 == n


def test_write_and_read_scan(tmp_path):
    c = PointCloud.from_arrays([[1, 2, 3], [4, 5, 6]], [0.1, 0.9], [10, 252], [0, 7])
    write_scan(tmp_path / "v" / "0.bin", c, tmp_path / "l" / "0.label")
    back = read_scan(tmp_path / "v" / "0.bin", tmp_path / "l" / "0.label")
    for a in ("xyz", "intensity", "semantic", "instance"):
        np.testing.assert_array_equal(getattr(back, a), getattr(c, a))


def test_sequence_meta_round_trip(tmp_path):
    poses = [Pose.from_yaw(0.3 * k, (k, 2 * k, 0.1)) for k in range(4)]
    tr = Pose.from_yaw(0.1, (0.2, -0.3, 0.5)).matrix()
    write_sequence_meta(tmp_path, poses, tr)
    back = read_poses(tmp_path / "poses.txt", tmp_path / "calib.txt")
    assert all(a.allclose(b, atol=1e-9) for a, b in zip(poses, back))


def test_open_sequence(synth_root):
    seq = open_sequence(synth_root, 0)
    assert seq.sequence == "00" and len(seq) == 3 == len(seq.poses)
    assert seq.scan_id(1) == "000001"
    assert seq.scan(0).labeled


def test_open_sequence_pose_count_mismatch(synth_root):
    poses = synth_root / "sequences" / "00" / "poses.txt"
    poses.write_text(poses.read_text().splitlines()[0] + "\n")
    with pytest.raises(PoseParseError):
        open_sequence(synth_root, "00")


def test_cloud_is_immutable():
    c = PointCloud.from_arrays([[1, 2, 3]])
    with pytest.raises(ValueError):
        c.xyz[0, 0] = 5
