"""Polar ray casting and the multi-layer grid builder.

The dense layers come from rays between the sensor and every detection. Along
one azimuth column a range bin is transmitted by every ray that ends farther
out, so the transmission count is a suffix sum of the per-bin endpoint
histogram. The beam height at range ``r`` of a ray ending at ``(r_p, z_p)`` is
``r * z_p / r_p``, so the lowest traversing beam is ``r`` times the smallest
slope among those rays (a suffix minimum). Both reduce to one pass over the
points plus cumulative scans over the polar grid.

Sparse layers (intensity, detected heights, label histograms) are binned
directly in the cartesian grid unless ``all_polar`` is requested.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import taxonomy
from .grid import GridSpec, MultiLayerGrid
from .kitti_io import PointCloud


@dataclass(frozen=True)
class PolarSpec:
    """Intermediate polar grid.

    Azimuth bin ``a`` is centered on ``-pi + 2*pi*a/azimuth_bins``; range bin
    ``b`` is centered on ``b * range_resolution``. Points with planar range
    ``<= min_range`` are discarded as self-returns.
    """

    azimuth_bins: int = 2048
    range_resolution: float = 0.10
    max_range: float = 56.0
    min_range: float = 1.0

    def __post_init__(self):
        if self.azimuth_bins < 1:
            raise ValueError("azimuth_bins must be >= 1")
        if not self.range_resolution > 0 or not self.max_range > 0:
            raise ValueError("range_resolution and max_range must be positive")

    @property
    def range_bins(self) -> int:
        return int(round(self.max_range / self.range_resolution))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.azimuth_bins, self.range_bins)

    def azimuth_bin(self, x, y) -> np.ndarray:
        theta = np.arctan2(y, x)
        a = np.floor((theta + np.pi) * (self.azimuth_bins / (2.0 * np.pi)) + 0.5)
        return a.astype(np.int64) % self.azimuth_bins

    def range_bin(self, r) -> np.ndarray:
        return np.floor(np.asarray(r) / self.range_resolution + 0.5).astype(np.int64)

    def bin_centers(self) -> np.ndarray:
        return np.arange(self.range_bins, dtype=np.float64) * self.range_resolution


@dataclass
class PolarGrid:
    spec: PolarSpec
    transmissions: np.ndarray  # (azimuth_bins, range_bins) uint32
    min_height: np.ndarray  # float64, NaN where transmissions == 0


def _polar_endpoints(xyz: np.ndarray, spec: PolarSpec):
    """Flat endpoint index into an ``(A, B + 1)`` table and the beam slope."""
    x = xyz[:, 0].astype(np.float64)
    y = xyz[:, 1].astype(np.float64)
    z = xyz[:, 2].astype(np.float64)
    r = np.hypot(x, y)
    keep = r > spec.min_range
    x, y, z, r = x[keep], y[keep], z[keep], r[keep]
    nb = spec.range_bins
    # Endpoints past the last bin keep transmitting every bin of their column.
    b = np.minimum(spec.range_bin(r), nb)
    a = spec.azimuth_bin(x, y)
    return a * (nb + 1) + b, z / r


def cast_rays(cloud: PointCloud | np.ndarray, spec: PolarSpec = PolarSpec(), z_offset: float = 0.0) -> PolarGrid:
    """Transmission counts and lowest beam heights on the polar grid.

    Every range bin strictly before a ray's endpoint bin gains one
    transmission; the endpoint bin gains none.
    """
    xyz = cloud.xyz if isinstance(cloud, PointCloud) else np.asarray(cloud)[:, :3]
    na, nb = spec.shape
    idx, slope = _polar_endpoints(xyz, spec)

    counts = np.bincount(idx, minlength=na * (nb + 1)).reshape(na, nb + 1)
    # Suffix sum from bin b+1 onwards = rays passing through bin b.
    passing = np.cumsum(counts[:, :0:-1], axis=1)[:, ::-1]

    steepest = np.full(na * (nb + 1), np.inf)
    np.minimum.at(steepest, idx, slope)
    steepest = np.minimum.accumulate(steepest.reshape(na, nb + 1)[:, :0:-1], axis=1)[:, ::-1]

    with np.errstate(invalid="ignore"):
        height = spec.bin_centers()[None, :] * steepest + z_offset
    height[passing == 0] = np.nan
    return PolarGrid(spec, passing.astype(np.uint32), height)


@lru_cache(maxsize=8)
def _remap_table(polar: PolarSpec, grid: GridSpec) -> np.ndarray:
    """Flat polar index nearest to each cartesian cell center (-1 = no source)."""
    dx, dy = grid.cell_offsets()
    scale = grid.cell_size / polar.range_resolution
    # Range in units of range bins.  Offsets are integral on the axes, so axis
    # cells land exactly on bin centers.
    rho = np.hypot(dx, dy) * scale
    b = np.floor(rho + 0.5).astype(np.int64)
    a = polar.azimuth_bin(dx, dy)
    table = a * polar.range_bins + b
    table[b >= polar.range_bins] = -1
    table.flags.writeable = False
    return table


def _sensor_cell(grid: GridSpec) -> tuple[int, int] | None:
    if grid.width % 2 and grid.height % 2:
        return grid.center_cell
    return None


def remap_to_cartesian(polar: PolarGrid, spec: GridSpec = GridSpec()):
    """Nearest-cell lookup of the polar layers on the cartesian grid.

    The cell holding the sensor has no defined azimuth. Rays start there
    rather than traverse it, so it stays unobserved.

    Returns:
        ``(observability, min_observed_height)`` as uint32 / float32 arrays.
    """
    table = _remap_table(polar.spec, spec)
    valid = table >= 0
    cell = _sensor_cell(spec)
    if cell is not None:
        valid = valid.copy()
        valid[cell[1], cell[0]] = False
    trans = polar.transmissions.reshape(-1)
    height = polar.min_height.reshape(-1)
    obs = np.zeros(spec.shape, dtype=np.uint32)
    low = np.full(spec.shape, np.nan, dtype=np.float32)
    obs[valid] = trans[table[valid]]
    low[valid] = height[table[valid]]
    return obs, low


def _reduce_sorted(idx: np.ndarray, intensity: np.ndarray, z: np.ndarray, bins: np.ndarray):
    """Per-cell statistics over points, accumulating each cell in point order."""
    order = np.argsort(idx, kind="stable")
    idx = idx[order]
    n = len(idx)
    if n == 0:
        empty = np.zeros(0)
        return np.zeros(0, np.int64), np.zeros(0, np.int64), empty, empty, empty, np.zeros((0, taxonomy.NUM_BINS), np.int64)
    starts = np.flatnonzero(np.r_[True, idx[1:] != idx[:-1]])
    cells = idx[starts]
    counts = np.diff(np.r_[starts, n])
    isum = np.add.reduceat(intensity[order].astype(np.float64), starts)
    zs = z[order]
    zmin = np.minimum.reduceat(zs, starts)
    zmax = np.maximum.reduceat(zs, starts)
    member = np.repeat(np.arange(len(cells)), counts)
    hist = np.bincount(member * taxonomy.NUM_BINS + bins[order], minlength=len(cells) * taxonomy.NUM_BINS)
    return cells, counts, isum / counts, zmin, zmax, hist.reshape(-1, taxonomy.NUM_BINS)


def _label_bins(cloud: PointCloud, label_table=None) -> np.ndarray:
    if cloud.semantic is None:
        return np.full(len(cloud), taxonomy.UNLABELED_BIN, dtype=np.intp)
    return taxonomy.to_bins(taxonomy.reduce_labels(cloud.semantic, label_table))


def bin_endpoints(cloud: PointCloud, spec: GridSpec = GridSpec(), label_table=None, grid: MultiLayerGrid | None = None) -> MultiLayerGrid:
    """Fill intensity, detected heights, detections and label histograms.

    Points falling outside the grid are dropped. Unlabeled clouds count every
    point in the unlabeled histogram bin.
    """
    grid = MultiLayerGrid.empty(spec) if grid is None else grid
    xyz = cloud.xyz
    flat, inside = spec.flat_index(xyz[:, 0], xyz[:, 1])
    bins = _label_bins(cloud, label_table)
    z = xyz[:, 2].astype(np.float64) + spec.z_offset
    cells, counts, mean, zmin, zmax, hist = _reduce_sorted(
        flat[inside], cloud.intensity[inside], z[inside], bins[inside]
    )
    _scatter(grid, cells, counts, mean, zmin, zmax, hist)
    return grid


def _scatter(grid, cells, counts, mean, zmin, zmax, hist):
    grid.detections.reshape(-1)[cells] = counts
    grid.intensity.reshape(-1)[cells] = mean
    grid.min_detected_height.reshape(-1)[cells] = zmin
    grid.max_detected_height.reshape(-1)[cells] = zmax
    grid.label_histogram.reshape(-1, taxonomy.NUM_BINS)[cells] = hist


def bin_endpoints_polar(cloud: PointCloud, polar: PolarSpec, spec: GridSpec, label_table=None, grid=None) -> MultiLayerGrid:
    """Sparse layers binned on the polar grid, then remapped like the dense ones.

    Fidelity mode only: a polar cell can feed several cartesian cells (or
    none), so detections are not conserved.
    """
    grid = MultiLayerGrid.empty(spec) if grid is None else grid
    xyz = cloud.xyz
    x = xyz[:, 0].astype(np.float64)
    y = xyz[:, 1].astype(np.float64)
    b = polar.range_bin(np.hypot(x, y))
    keep = b < polar.range_bins
    flat = polar.azimuth_bin(x, y) * polar.range_bins + b
    bins = _label_bins(cloud, label_table)
    z = xyz[:, 2].astype(np.float64) + spec.z_offset
    cells, counts, mean, zmin, zmax, hist = _reduce_sorted(flat[keep], cloud.intensity[keep], z[keep], bins[keep])
    slot = np.full(polar.azimuth_bins * polar.range_bins, -1, dtype=np.int64)
    slot[cells] = np.arange(len(cells))
    table = _remap_table(polar, spec).reshape(-1)
    src = np.where(table >= 0, slot[np.maximum(table, 0)], -1)
    target = np.flatnonzero(src >= 0)
    k = src[target]
    _scatter(grid, target, counts[k], mean[k], zmin[k], zmax[k], hist[k])
    return grid


def build_grid(
    cloud: PointCloud,
    polar_spec: PolarSpec = PolarSpec(),
    grid_spec: GridSpec = GridSpec(),
    all_polar: bool = False,
    label_table=None,
) -> MultiLayerGrid:
    """All five input layers plus label histograms for one scan."""
    r = np.hypot(cloud.xyz[:, 0].astype(np.float64), cloud.xyz[:, 1].astype(np.float64))
    near = r <= polar_spec.min_range
    if near.any():
        cloud = cloud.subset(~near)
    grid = MultiLayerGrid.empty(grid_spec)
    if all_polar:
        bin_endpoints_polar(cloud, polar_spec, grid_spec, label_table, grid)
    else:
        bin_endpoints(cloud, grid_spec, label_table, grid)
    polar = cast_rays(cloud, polar_spec, grid_spec.z_offset)
    grid.observability, grid.min_observed_height = remap_to_cartesian(polar, grid_spec)
    grid.meta["self_returns_dropped"] = int(near.sum())
    return grid


def check_coverage(polar: PolarSpec, grid: GridSpec) -> bool:
    """True if every cartesian cell center has a polar source cell."""
    return int(polar.range_bin(grid.corner_range)) < polar.range_bins
