"""Readers for the SemanticKITTI on-disk layout.

::

    <root>/sequences/<NN>/velodyne/<FFFFFF>.bin   4 x float32 per point
    <root>/sequences/<NN>/labels/<FFFFFF>.label   uint32 per point
    <root>/sequences/<NN>/poses.txt               3x4 camera poses, row-major
    <root>/sequences/<NN>/calib.txt               contains "Tr:" (velodyne -> camera)

All binary values are little-endian.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

_POINT_DTYPE = np.dtype("<f4")
_LABEL_DTYPE = np.dtype("<u4")


class KittiFormatError(ValueError):
    """Base class for malformed dataset files."""


class MalformedScanError(KittiFormatError):
    pass


class LabelMismatchError(KittiFormatError):
    pass


class PoseParseError(KittiFormatError):
    pass


class CalibrationError(KittiFormatError):
    pass


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class PointCloud:
    """One scan in its sensor frame.

    ``semantic``/``instance`` are None for unlabeled clouds. ``dropped`` counts
    records removed at parse time because of non-finite values, and
    ``record_index`` maps each kept point back to its record in the file.
    """

    xyz: np.ndarray
    intensity: np.ndarray
    semantic: np.ndarray | None = None
    instance: np.ndarray | None = None
    dropped: int = 0
    record_index: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        n = len(self.xyz)
        if self.xyz.shape != (n, 3) or self.intensity.shape != (n,):
            raise ValueError("xyz must be (N, 3) and intensity (N,)")
        for labels in (self.semantic, self.instance):
            if labels is not None and labels.shape != (n,):
                raise LabelMismatchError(f"{len(labels)} labels for {n} points")

    def __len__(self) -> int:
        return len(self.xyz)

    @property
    def labeled(self) -> bool:
        return self.semantic is not None

    @property
    def n_records(self) -> int:
        return len(self) + self.dropped

    @classmethod
    def from_arrays(cls, xyz, intensity=None, semantic=None, instance=None) -> "PointCloud":
        xyz = np.ascontiguousarray(xyz, dtype=np.float32).reshape(-1, 3)
        n = len(xyz)
        if intensity is None:
            intensity = np.zeros(n, dtype=np.float32)
        intensity = np.ascontiguousarray(intensity, dtype=np.float32).reshape(-1)
        if semantic is not None:
            semantic = np.ascontiguousarray(semantic, dtype=np.uint16).reshape(-1)
            if instance is None:
                instance = np.zeros(len(semantic), dtype=np.uint16)
            instance = np.ascontiguousarray(instance, dtype=np.uint16).reshape(-1)
        return cls(
            _readonly(xyz),
            _readonly(intensity),
            None if semantic is None else _readonly(semantic),
            None if instance is None else _readonly(instance),
        )

    def with_labels(self, semantic: np.ndarray, instance: np.ndarray) -> "PointCloud":
        """Attach per-record labels (one per file record, dropped ones included)."""
        if len(semantic) != self.n_records:
            raise LabelMismatchError(
                f"{len(semantic)} labels for {self.n_records} point records"
            )
        if self.record_index is not None:
            semantic = semantic[self.record_index]
            instance = instance[self.record_index]
        return PointCloud(
            self.xyz,
            self.intensity,
            _readonly(np.ascontiguousarray(semantic, dtype=np.uint16)),
            _readonly(np.ascontiguousarray(instance, dtype=np.uint16)),
            self.dropped,
            self.record_index,
        )

    def subset(self, mask: np.ndarray) -> "PointCloud":
        return PointCloud(
            _readonly(self.xyz[mask]),
            _readonly(self.intensity[mask]),
            None if self.semantic is None else _readonly(self.semantic[mask]),
            None if self.instance is None else _readonly(self.instance[mask]),
        )

    def transformed(self, pose: "Pose") -> "PointCloud":
        xyz = pose.apply(self.xyz.astype(np.float64))
        return PointCloud(
            _readonly(xyz.astype(np.float32)), self.intensity, self.semantic, self.instance
        )


def read_point_cloud(path: str | os.PathLike) -> PointCloud:
    """Decode a ``velodyne/*.bin`` scan; labels are left empty."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) % 16:
        raise MalformedScanError(f"{path}: size {len(data)} is not a multiple of 16 bytes")
    raw = np.frombuffer(data, dtype=_POINT_DTYPE).reshape(-1, 4)
    finite = np.isfinite(raw).all(axis=1)
    dropped = int(len(raw) - finite.sum())
    record_index = None
    if dropped:
        log.warning("%s: dropped %d non-finite points", path, dropped)
        record_index = _readonly(np.flatnonzero(finite))
        raw = raw[finite]
    return PointCloud(
        _readonly(np.ascontiguousarray(raw[:, :3], dtype=np.float32)),
        _readonly(np.ascontiguousarray(raw[:, 3], dtype=np.float32)),
        dropped=dropped,
        record_index=record_index,
    )


def decode_label_words(words: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    words = np.asarray(words, dtype=np.uint32)
    return (words & 0xFFFF).astype(np.uint16), (words >> 16).astype(np.uint16)


def read_labels(path: str | os.PathLike, expected_count: int) -> tuple[np.ndarray, np.ndarray]:
    """Read ``(semantic, instance)`` arrays from a ``.label`` file."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) % 4 or len(data) // 4 != expected_count:
        raise LabelMismatchError(
            f"{path}: {len(data) / 4:g} labels, expected {expected_count}"
        )
    return decode_label_words(np.frombuffer(data, dtype=_LABEL_DTYPE))


def read_scan(scan_path, label_path=None) -> PointCloud:
    cloud = read_point_cloud(scan_path)
    if label_path is None:
        return cloud
    semantic, instance = read_labels(label_path, cloud.n_records)
    return cloud.with_labels(semantic, instance)


@dataclass(frozen=True)
class Pose:
    """Rigid transform ``p_world = rotation @ p + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _readonly(np.array(self.rotation, dtype=np.float64)))
        object.__setattr__(
            self, "translation", _readonly(np.array(self.translation, dtype=np.float64).reshape(3))
        )

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_translation(cls, t) -> "Pose":
        return cls(np.eye(3), t)

    @classmethod
    def from_yaw(cls, yaw: float, t=(0.0, 0.0, 0.0)) -> "Pose":
        c, s = np.cos(yaw), np.sin(yaw)
        return cls(np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]), t)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        """``self ∘ other``: apply ``other`` first."""
        return Pose(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    __matmul__ = compose

    def apply(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation.T + self.translation

    def is_orthonormal(self, atol: float = 1e-6) -> bool:
        return np.allclose(self.rotation @ self.rotation.T, np.eye(3), atol=atol)

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return np.allclose(self.rotation, other.rotation, atol=atol) and np.allclose(
            self.translation, other.translation, atol=atol
        )


def _parse_row(line: str, where: str) -> np.ndarray:
    try:
        values = [float(v) for v in line.split()]
    except ValueError as exc:
        raise PoseParseError(f"{where}: {exc}") from None
    if len(values) != 12:
        raise PoseParseError(f"{where}: expected 12 numbers, got {len(values)}")
    m = np.eye(4)
    m[:3, :] = np.array(values).reshape(3, 4)
    return m


def read_calibration(calib_path: str | os.PathLike) -> np.ndarray:
    """4x4 velodyne -> camera transform ``Tr`` from ``calib.txt``."""
    calib_path = Path(calib_path)
    for n, line in enumerate(calib_path.read_text().splitlines(), 1):
        key, _, value = line.partition(":")
        if key.strip() == "Tr":
            return _parse_row(value, f"{calib_path}:{n}")
    raise CalibrationError(f"{calib_path}: no 'Tr' entry")


def read_poses(poses_path: str | os.PathLike, calib_path: str | os.PathLike) -> list[Pose]:
    """Sensor-frame -> world poses, ``P_cam @ Tr`` per line of ``poses.txt``."""
    tr = read_calibration(calib_path)
    poses_path = Path(poses_path)
    poses = []
    for n, line in enumerate(poses_path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        poses.append(Pose.from_matrix(_parse_row(line, f"{poses_path}:{n}") @ tr))
    return poses


def relative_transform(poses: list[Pose], i: int, j: int) -> Pose:
    """Transform taking scan-``j`` sensor coordinates into the scan-``i`` frame."""
    n = len(poses)
    for k in (i, j):
        if not 0 <= k < n:
            raise IndexError(f"scan index {k} out of range for {n} poses")
    return poses[i].inverse().compose(poses[j])


@dataclass(frozen=True)
class SequenceIndex:
    """File listing of one sequence.

    ``scan(i)`` reads scan ``i`` with labels when a label file exists.
    """

    sequence: str
    scan_files: tuple[Path, ...]
    label_files: tuple[Path | None, ...]
    poses: tuple[Pose, ...]
    tr: np.ndarray

    def __len__(self) -> int:
        return len(self.scan_files)

    def scan_id(self, i: int) -> str:
        return self.scan_files[i].stem

    def scan(self, i: int) -> PointCloud:
        return read_scan(self.scan_files[i], self.label_files[i])


def sequence_dir(root: str | os.PathLike, sequence: str | int) -> Path:
    return Path(root) / "sequences" / f"{int(sequence):02d}"


def open_sequence(root: str | os.PathLike, sequence: str | int) -> SequenceIndex:
    seq_dir = sequence_dir(root, sequence)
    scan_files = tuple(sorted((seq_dir / "velodyne").glob("*.bin")))
    label_files = []
    for f in scan_files:
        label = seq_dir / "labels" / (f.stem + ".label")
        label_files.append(label if label.exists() else None)
    tr = read_calibration(seq_dir / "calib.txt")
    poses = tuple(read_poses(seq_dir / "poses.txt", seq_dir / "calib.txt"))
    if len(poses) != len(scan_files):
        raise PoseParseError(
            f"{seq_dir}: {len(poses)} poses for {len(scan_files)} scans"
        )
    return SequenceIndex(f"{int(sequence):02d}", scan_files, tuple(label_files), poses, tr)


def write_scan(scan_path, cloud: PointCloud, label_path=None) -> None:
    """Write a cloud (and its labels) in the binary dataset format."""
    scan_path = Path(scan_path)
    scan_path.parent.mkdir(parents=True, exist_ok=True)
    rec = np.empty((len(cloud), 4), dtype=_POINT_DTYPE)
    rec[:, :3] = cloud.xyz
    rec[:, 3] = cloud.intensity
    scan_path.write_bytes(rec.tobytes())
    if label_path is not None:
        if not cloud.labeled:
            raise ValueError("cloud has no labels to write")
        label_path = Path(label_path)
        label_path.parent.mkdir(parents=True, exist_ok=True)
        words = cloud.semantic.astype(np.uint32) | (cloud.instance.astype(np.uint32) << 16)
        label_path.write_bytes(words.astype(_LABEL_DTYPE).tobytes())


def _format_row(m: np.ndarray) -> str:
    return " ".join(f"{v:.12e}" for v in m[:3, :].reshape(-1))


def write_sequence_meta(seq_dir, poses: list[Pose], tr: np.ndarray | None = None) -> None:
    """Write ``poses.txt``/``calib.txt`` so that :func:`read_poses` returns ``poses``."""
    seq_dir = Path(seq_dir)
    seq_dir.mkdir(parents=True, exist_ok=True)
    tr = np.eye(4) if tr is None else np.asarray(tr, dtype=np.float64)
    tr_inv = np.linalg.inv(tr)
    lines = [_format_row(p.matrix() @ tr_inv) for p in poses]
    (seq_dir / "poses.txt").write_text("\n".join(lines) + "\n")
    proj = np.zeros((3, 4))
    proj[:, :3] = np.eye(3)
    calib = [f"P{k}: " + " ".join(f"{v:.12e}" for v in proj.reshape(-1)) for k in range(4)]
    calib.append("Tr: " + _format_row(tr))
    (seq_dir / "calib.txt").write_text("\n".join(calib) + "\n")
