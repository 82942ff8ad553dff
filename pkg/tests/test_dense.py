from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semgrid import taxonomy
from semgrid.dense import (
    AggregationParams,
    InMemorySequence,
    aggregate_static,
    build_dense_gt,
    select_neighbor_scans,
    superimpose_moving,
)
from semgrid.encoding import encode_grid, encode_histograms
from semgrid.grid import GridSpec
from semgrid.kitti_io import PointCloud, Pose
from semgrid.polar import build_grid
from semgrid.synth import RAW, Box, generate_scene, random_street
from semgrid.taxonomy import CLASS_INDEX, UNLABELED

from .conftest import scene, sequence

SPEC = GridSpec()
VEHICLE, ROAD = CLASS_INDEX["vehicle"], CLASS_INDEX["road"]


def _line(n, spacing=1.0):
    return [Pose.from_translation((k * spacing, 0, 0)) for k in range(n)]


def _static(c: PointCloud) -> PointCloud:
    return c.subset(~taxonomy.is_moving(c.semantic))


def _sparse(c: PointCloud) -> np.ndarray:
    return encode_grid(build_grid(c))


def test_params():
    assert AggregationParams().threshold == 100.0
    with pytest.raises(ValueError):
        AggregationParams(max_scan_range=0)
    with pytest.raises(ValueError):
        AggregationParams(distance="manhattan")


def test_neighbors_identical_poses():
    assert select_neighbor_scans([Pose.identity()] * 5, 2) == [0, 1, 2, 3, 4]


def test_neighbors_on_a_line():
    poses = _line(400)
    assert select_neighbor_scans(poses, 200) == list(range(101, 300))
    assert select_neighbor_scans(poses, 0) == list(range(0, 100))


def test_neighbors_single_scan_and_bad_index():
    assert select_neighbor_scans([Pose.identity()], 0) == [0]
    with pytest.raises(IndexError):
        select_neighbor_scans([Pose.identity()], 1)


def test_neighbors_x_distance():
    poses = [Pose.from_translation((0, 0, 0)), Pose.from_translation((10, 150, 0)), Pose.from_translation((120, 0, 0))]
    assert select_neighbor_scans(poses, 0) == [0]
    assert select_neighbor_scans(poses, 0, AggregationParams(distance="x")) == [0, 1]


def test_aggregate_identical_neighbor_equals_own_histogram():
    c = _static(scene(1).cloud)
    src = InMemorySequence([c], [Pose.identity()])
    hist = aggregate_static(src, [0], 0)
    np.testing.assert_array_equal(hist, build_grid(c).label_histogram)


def test_aggregate_two_identical_scans_doubles_counts():
    c = _static(scene(1).cloud)
    src = InMemorySequence([c, c], [Pose.identity(), Pose.identity()])
    np.testing.assert_array_equal(aggregate_static(src, [0, 1], 0), 2 * aggregate_static(src, [0], 0))


def test_aggregate_moving_only_neighbor_contributes_nothing():
    target = _static(scene(1).cloud)
    movers = PointCloud.from_arrays([[5.0, 2.0, -1.0], [6.0, 2.0, -1.0]], semantic=[252, 254])
    src = InMemorySequence([target, movers], [Pose.identity(), Pose.identity()])
    np.testing.assert_array_equal(aggregate_static(src, [0, 1], 0), aggregate_static(src, [0], 0))


def test_aggregate_requires_labels():
    src = InMemorySequence([PointCloud.from_arrays([[5.0, 0, 0]])], [Pose.identity()])
    with pytest.raises(ValueError):
        aggregate_static(src, [0], 0)


def test_aggregate_transforms_into_target_frame():
    # The same world point seen from two poses lands in one target cell.
    p_world = np.array([12.0, 3.0, -1.0])
    poses = [Pose.from_translation((0, 0, 0)), Pose.from_yaw(0.4, (4.0, -1.0, 0.0))]
    local = [poses[k].inverse().apply(p_world[None]) for k in range(2)]
    clouds = [PointCloud.from_arrays(p, semantic=[40]) for p in local]
    hist = aggregate_static(InMemorySequence(clouds, poses), [0, 1], 0)
    col, row = SPEC.world_to_cell(12.0, 3.0)
    assert hist[row, col, ROAD] == 2 and hist.sum() == 2


def test_superimpose_no_moving_points():
    dense = np.full(SPEC.shape, ROAD, np.uint8)
    out = superimpose_moving(dense, PointCloud.from_arrays([[5.0, 0, -1]], semantic=[40]))
    np.testing.assert_array_equal(out, dense)


def test_superimpose_moving_car_over_road():
    dense = np.full(SPEC.shape, ROAD, np.uint8)
    cur = PointCloud.from_arrays([[5.01, 2.01, -1.0], [5.02, 2.02, -0.5], [80.0, 0, 0]], semantic=[252, 252, 252])
    out = superimpose_moving(dense, cur)
    col, row = SPEC.world_to_cell(5.01, 2.01)
    assert out[row, col] == VEHICLE
    assert (out != ROAD).sum() == 1  # the point at 80 m is outside


def test_build_dense_single_scan_equals_sparse():
    c = _static(scene(2).cloud)
    dense = build_dense_gt(InMemorySequence([c], [Pose.identity()]), 0)
    np.testing.assert_array_equal(dense, _sparse(c))


def test_translating_moving_box_only_at_current_location():
    base = random_street(3, boxes=(), poles=(), azimuth_offset=0.5)
    scans = [generate_scene(replace_box(base, x)) for x in (10.0, 20.0)]
    src = InMemorySequence([s.cloud for s in scans], [Pose.identity(), Pose.identity()])
    dense = build_dense_gt(src, 0)
    cur = scans[0].cloud
    moving = taxonomy.is_moving(cur.semantic) & (np.hypot(cur.xyz[:, 0], cur.xyz[:, 1]) > 1.0)
    flat, inside = SPEC.flat_index(cur.xyz[moving, 0], cur.xyz[moving, 1])
    expected = np.zeros(SPEC.num_cells, bool)
    expected[flat[inside]] = True
    np.testing.assert_array_equal((dense == VEHICLE).reshape(-1), expected)
    assert expected.any()
    # Nothing of the box at its other position.
    col, row = SPEC.world_to_cell(20.0 - 2.0, 3.0)
    assert (dense[row - 10 : row + 10, col - 5 : col + 40] != VEHICLE).all()


def replace_box(params, x):
    return replace(params, boxes=(Box((x, 3.0), (4.5, 1.8, 1.6), RAW["moving-car"]),))


# --- invariants on synthetic sequences ---------------------------------------


@pytest.mark.parametrize("seed", [0, 5])
def test_density_monotonicity(seed):
    scenes, poses = sequence(seed)
    src = InMemorySequence([s.cloud for s in scenes], poses)
    for target in (0, len(scenes) - 1):
        dense = build_dense_gt(src, target)
        sparse = _sparse(scenes[target].cloud)
        assert (dense != UNLABELED).sum() >= (sparse != UNLABELED).sum()


def test_moving_points_of_other_scans_are_ignored():
    scenes, poses = sequence(4)
    clouds = [s.cloud for s in scenes]
    src = InMemorySequence(clouds, poses)
    ref = build_dense_gt(src, 0)
    # Move every moving point of the other scans somewhere else.
    altered = [clouds[0]]
    for c in clouds[1:]:
        xyz = c.xyz.copy()
        m = taxonomy.is_moving(c.semantic)
        xyz[m] = xyz[m][:, [1, 0, 2]] * 0.5
        altered.append(PointCloud.from_arrays(xyz, c.intensity, c.semantic))
    np.testing.assert_array_equal(build_dense_gt(InMemorySequence(altered, poses), 0), ref)


def test_superimposition_rule():
    scenes, poses = sequence(6)
    src = InMemorySequence([s.cloud for s in scenes], poses)
    target = 1
    static = encode_histograms(aggregate_static(src, select_neighbor_scans(poses, target), target))
    dense = build_dense_gt(src, target)
    cur = scenes[target].cloud
    m = taxonomy.is_moving(cur.semantic) & (np.hypot(cur.xyz[:, 0], cur.xyz[:, 1]) > 1.0)
    flat, inside = SPEC.flat_index(cur.xyz[m, 0], cur.xyz[m, 1])
    flat = flat[inside]
    assert flat.size
    # Brute force: per cell, encode only the moving points there.
    expected = static.reshape(-1).copy()
    bins = taxonomy.to_bins(taxonomy.reduce_labels(cur.semantic[m][inside]))
    for cell in np.unique(flat):
        h = np.bincount(bins[flat == cell], minlength=13)
        expected[cell] = encode_histograms(h[None])[0]
    np.testing.assert_array_equal(dense.reshape(-1), expected)


@settings(max_examples=5, deadline=None)
@given(st.floats(-np.pi, np.pi), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(-50, 50))
def test_global_pose_invariance(yaw, x, y, z):
    scenes, poses = sequence(2, 3)
    g = Pose.from_yaw(yaw, (x, y, z))
    ref = build_dense_gt(InMemorySequence([s.cloud for s in scenes], poses), 1)
    moved = [g.compose(p) for p in poses]
    out = build_dense_gt(InMemorySequence([s.cloud for s in scenes], moved), 1)
    np.testing.assert_array_equal(out, ref)
