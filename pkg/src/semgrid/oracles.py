"""Self-checks of the fast paths against their slow reference versions.

Used by ``semgrid synth-check`` and the acceptance tests.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .encoding import encode_histograms
from .grid import GridSpec
from .polar import PolarSpec, build_grid
from .synth import axis_ray_cloud, brute_force_encode, compare_observability, dda_reference_cast, generate_scene, random_street
from .taxonomy import NUM_BINS


def exhaustive_histograms(max_points: int = 5, bins: int = NUM_BINS) -> np.ndarray:
    """Every histogram over ``bins`` classes with at most ``max_points`` points."""
    rows = []
    for k in range(max_points + 1):
        for combo in itertools.combinations_with_replacement(range(bins), k):
            rows.append(np.bincount(np.array(combo, dtype=np.int64), minlength=bins))
    return np.array(rows, dtype=np.int64).reshape(-1, bins)


def random_histograms(n: int, seed: int = 0) -> np.ndarray:
    """Mixed regimes: tiny counts (many ties), sparse cells and large counts."""
    rng = np.random.Generator(np.random.Philox(seed))
    thirds = [n // 3, n // 3, n - 2 * (n // 3)]
    tiny = rng.integers(0, 3, size=(thirds[0], NUM_BINS))
    sparse = rng.integers(0, 50, size=(thirds[1], NUM_BINS)) * (rng.random((thirds[1], NUM_BINS)) < 0.15)
    large = rng.integers(0, 100_000, size=(thirds[2], NUM_BINS))
    # Force exact weighted ties between a weight-5 and a weight-1 class.
    tie = rng.random(thirds[2]) < 0.2
    large[tie, 4] = 5 * large[tie, 0]
    return np.concatenate([tiny, sparse, large]).astype(np.int64)


@dataclass
class EncoderCheck:
    checked: int
    mismatches: int
    first_mismatch: list[int] | None = None

    @property
    def passed(self) -> bool:
        return self.mismatches == 0


def check_encoder(histograms: np.ndarray) -> EncoderCheck:
    fast = encode_histograms(histograms)
    slow = np.fromiter((brute_force_encode(h) for h in histograms.tolist()), dtype=np.int64, count=len(histograms))
    bad = np.flatnonzero(fast.astype(np.int64) != slow)
    first = histograms[bad[0]].tolist() if bad.size else None
    return EncoderCheck(len(histograms), int(bad.size), first)


def raycast_check(seed: int, polar: PolarSpec = PolarSpec(), spec: GridSpec = GridSpec()):
    """Fast observability of one random street scene against the DDA reference."""
    scene = generate_scene(random_street(seed))
    grid = build_grid(scene.cloud, polar, spec)
    obs, low = dda_reference_cast(scene.cloud, spec, polar.min_range, spec.z_offset)
    return compare_observability(grid.observability, grid.min_observed_height, obs, low)


@dataclass
class AxisCheck:
    observability_equal: bool
    observed_equal: bool  # same set of cells with a defined height
    max_height_error: float

    def passed(self, max_height_error: float = 0.15) -> bool:
        return self.observability_equal and self.observed_equal and self.max_height_error <= max_height_error


def axis_ray_check(polar: PolarSpec = PolarSpec(), spec: GridSpec = GridSpec()) -> AxisCheck:
    cloud = axis_ray_cloud()
    grid = build_grid(cloud, polar, spec)
    obs, low = dda_reference_cast(cloud, spec, polar.min_range, spec.z_offset)
    fast_low = grid.min_observed_height
    defined = ~np.isnan(low)
    same = np.array_equal(defined, ~np.isnan(fast_low))
    err = float(np.abs(fast_low[defined] - low[defined]).max()) if defined.any() else 0.0
    return AxisCheck(bool(np.array_equal(grid.observability, obs)), bool(same), err)
