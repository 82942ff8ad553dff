"""Dense ground truth from the static points of neighboring scans.

Static points of every scan near the target are moved into the target sensor
frame and binned into one label-histogram grid, which is encoded with the
usual weighted argmax. Moving objects cannot be aggregated over time, so the
moving points of the target scan alone are then stamped on top.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from . import taxonomy
from .encoding import encode_histograms
from .grid import GridSpec
from .kitti_io import PointCloud, Pose, relative_transform

_FLUSH_POINTS = 4_000_000


class ScanSource(Protocol):
    poses: Sequence[Pose]

    def __len__(self) -> int: ...

    def scan(self, i: int) -> PointCloud: ...


@dataclass
class InMemorySequence:
    """Scans and poses held in memory (synthetic data, tests)."""

    clouds: Sequence[PointCloud]
    poses: Sequence[Pose]

    def __post_init__(self):
        if len(self.clouds) != len(self.poses):
            raise ValueError(f"{len(self.poses)} poses for {len(self.clouds)} scans")

    def __len__(self) -> int:
        return len(self.clouds)

    def scan(self, i: int) -> PointCloud:
        return self.clouds[i]


@dataclass(frozen=True)
class AggregationParams:
    """``max_scan_range`` is the sensor range r; scans closer than 2r are fused.

    ``distance`` selects how sensor origins are compared: ``"euclidean"``
    (3D distance) or ``"x"`` (absolute difference of world x only).
    """

    max_scan_range: float = 50.0
    distance: str = "euclidean"
    min_range: float = 1.0

    def __post_init__(self):
        if not self.max_scan_range > 0:
            raise ValueError("max_scan_range must be positive")
        if self.distance not in ("euclidean", "x"):
            raise ValueError(f"unknown distance {self.distance!r}")

    @property
    def threshold(self) -> float:
        return 2.0 * self.max_scan_range


def select_neighbor_scans(poses: Sequence[Pose], target: int, params: AggregationParams = AggregationParams()) -> list[int]:
    if not 0 <= target < len(poses):
        raise IndexError(f"target {target} out of range for {len(poses)} poses")
    origins = np.array([p.translation for p in poses])
    delta = origins - origins[target]
    if params.distance == "x":
        dist = np.abs(delta[:, 0])
    else:
        dist = np.linalg.norm(delta, axis=1)
    return [int(i) for i in np.flatnonzero(dist < params.threshold)]


def _near_mask(cloud: PointCloud, min_range: float) -> np.ndarray:
    return np.hypot(cloud.xyz[:, 0].astype(np.float64), cloud.xyz[:, 1].astype(np.float64)) <= min_range


def _codes(cloud: PointCloud, transform: Pose | None, spec: GridSpec, keep: np.ndarray, label_table) -> np.ndarray:
    xyz = cloud.xyz[keep].astype(np.float64)
    if transform is not None:
        xyz = transform.apply(xyz)
    flat, inside = spec.flat_index(xyz[:, 0], xyz[:, 1])
    bins = taxonomy.to_bins(taxonomy.reduce_labels(cloud.semantic[keep], label_table))
    return flat[inside] * taxonomy.NUM_BINS + bins[inside]


def _require_labels(cloud: PointCloud, i: int) -> None:
    if not cloud.labeled:
        raise ValueError(f"scan {i} has no labels")


def aggregate_static(
    source: ScanSource,
    neighbors: Sequence[int],
    target: int,
    spec: GridSpec = GridSpec(),
    min_range: float = 1.0,
    label_table=None,
) -> np.ndarray:
    """Label histograms ``(height, width, 13)`` of all static neighbor points.

    Scans are streamed one at a time; moving points and self-returns within
    ``min_range`` of their own sensor are skipped.
    """
    hist = np.zeros(spec.num_cells * taxonomy.NUM_BINS, dtype=np.int64)
    pending: list[np.ndarray] = []
    n_pending = 0
    for j in neighbors:
        cloud = source.scan(j)
        _require_labels(cloud, j)
        keep = ~taxonomy.is_moving(cloud.semantic) & ~_near_mask(cloud, min_range)
        transform = None if j == target else relative_transform(source.poses, target, j)
        codes = _codes(cloud, transform, spec, keep, label_table)
        pending.append(codes)
        n_pending += len(codes)
        if n_pending >= _FLUSH_POINTS:
            hist += np.bincount(np.concatenate(pending), minlength=hist.size)
            pending, n_pending = [], 0
    if pending:
        hist += np.bincount(np.concatenate(pending), minlength=hist.size)
    return hist.astype(np.uint32).reshape(spec.shape + (taxonomy.NUM_BINS,))


def superimpose_moving(dense: np.ndarray, current: PointCloud, spec: GridSpec = GridSpec(), min_range: float = 1.0, label_table=None) -> np.ndarray:
    """Overwrite cells holding moving points of ``current`` with their label."""
    _require_labels(current, -1)
    out = np.array(dense, dtype=np.uint8, copy=True)
    keep = taxonomy.is_moving(current.semantic) & ~_near_mask(current, min_range)
    if not keep.any():
        return out
    codes = _codes(current, None, spec, keep, label_table)
    cells, inverse = np.unique(codes // taxonomy.NUM_BINS, return_inverse=True)
    hist = np.zeros((len(cells), taxonomy.NUM_BINS), dtype=np.int64)
    np.add.at(hist, (inverse, codes % taxonomy.NUM_BINS), 1)
    out.reshape(-1)[cells] = encode_histograms(hist)
    return out


def build_dense_gt(
    source: ScanSource,
    target: int,
    params: AggregationParams = AggregationParams(),
    spec: GridSpec = GridSpec(),
    label_table=None,
    neighbors: Sequence[int] | None = None,
) -> np.ndarray:
    """Dense semantic grid (uint8, 255 = unlabeled) for scan ``target``."""
    if neighbors is None:
        neighbors = select_neighbor_scans(source.poses, target, params)
    hist = aggregate_static(source, neighbors, target, spec, params.min_range, label_table)
    dense = encode_histograms(hist)
    return superimpose_moving(dense, source.scan(target), spec, params.min_range, label_table)
