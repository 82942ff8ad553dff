from __future__ import annotations

from functools import lru_cache

import numpy as np
import pytest

from semgrid.grid import GridSpec
from semgrid.kitti_io import PointCloud, write_scan, write_sequence_meta
from semgrid.polar import PolarSpec
from semgrid.synth import generate_scene, random_street, street_sequence

# Small geometry for property tests: 10.1 m x 5.1 m.
SMALL_GRID = GridSpec(width=101, height=51)
SMALL_POLAR = PolarSpec(azimuth_bins=256, max_range=6.0)


@lru_cache(maxsize=None)
def scene(seed: int):
    return generate_scene(random_street(seed))


@lru_cache(maxsize=None)
def sequence(seed: int, n_scans: int = 4, spacing: float = 1.0):
    return street_sequence(seed, n_scans=n_scans, spacing=spacing)


def cloud(points, intensity=None, semantic=None) -> PointCloud:
    return PointCloud.from_arrays(np.asarray(points, dtype=np.float64).reshape(-1, 3), intensity, semantic)


def export_sequence(root, scenes, poses, sequence_id: str = "00", tr=None):
    seq_dir = root / "sequences" / sequence_id
    for k, s in enumerate(scenes):
        write_scan(seq_dir / "velodyne" / f"{k:06d}.bin", s.cloud, seq_dir / "labels" / f"{k:06d}.label")
    write_sequence_meta(seq_dir, poses, tr)
    return seq_dir


@pytest.fixture
def synth_root(tmp_path):
    """Dataset root with a three-scan synthetic sequence 00."""
    scenes, poses = sequence(7, 3)
    export_sequence(tmp_path / "data", scenes, poses)
    return tmp_path / "data"


# One line per acceptance criterion, repeated in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
