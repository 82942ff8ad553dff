"""Cartesian grid geometry and the multi-layer grid container.

Grid convention: columns grow with sensor +x, rows grow with sensor -y, so
row 0 is the +y edge and the vehicle appears to drive to the right when the
grid is drawn as an image. With odd cell counts the sensor sits exactly on
the center of cell ``((width - 1) / 2, (height - 1) / 2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .taxonomy import NUM_BINS

INPUT_LAYERS = (
    "intensity",
    "min_detected_height",
    "max_detected_height",
    "observability",
    "min_observed_height",
)


@dataclass(frozen=True)
class GridSpec:
    """Geometry of the cartesian region of interest.

    ``z_offset`` is added to every stored height so layers can be expressed
    relative to the ground instead of the sensor.
    """

    width: int = 1001
    height: int = 501
    cell_size: float = 0.10
    z_offset: float = 0.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be positive")
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def num_cells(self) -> int:
        return self.width * self.height

    @property
    def center_cell(self) -> tuple[int, int]:
        """(column, row) of the cell holding the sensor origin."""
        return (self.width // 2, self.height // 2)

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """(x_min, x_max, y_min, y_max) of the covered region in meters."""
        half_x = self.width * self.cell_size / 2.0
        half_y = self.height * self.cell_size / 2.0
        return (-half_x, half_x, -half_y, half_y)

    @property
    def corner_range(self) -> float:
        """Planar distance from the sensor to the farthest cell center."""
        x, y = self.cell_center(self.width - 1, 0)
        return math.hypot(x, y)

    def world_to_cell(self, x: float, y: float) -> tuple[int, int] | None:
        """Cell (column, row) containing ``(x, y)``, or None outside the grid."""
        col = math.floor(x / self.cell_size + self.width / 2.0)
        row = math.floor(self.height / 2.0 - y / self.cell_size)
        if 0 <= col < self.width and 0 <= row < self.height:
            return (col, row)
        return None

    def world_to_cells(self, x: np.ndarray, y: np.ndarray):
        """Vectorized :meth:`world_to_cell`.

        Returns:
            ``(col, row, inside)``; indices are only meaningful where
            ``inside`` is True.
        """
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        col = np.floor(x / self.cell_size + self.width / 2.0)
        row = np.floor(self.height / 2.0 - y / self.cell_size)
        inside = (col >= 0) & (col < self.width) & (row >= 0) & (row < self.height)
        return col.astype(np.int64), row.astype(np.int64), inside

    def flat_index(self, x: np.ndarray, y: np.ndarray):
        """Row-major cell index for each point plus the inside mask."""
        col, row, inside = self.world_to_cells(x, y)
        return row * self.width + col, inside

    def cell_center(self, col: int, row: int) -> tuple[float, float]:
        if not (0 <= col < self.width and 0 <= row < self.height):
            raise IndexError(f"cell ({col}, {row}) outside {self.width}x{self.height} grid")
        # Integer offsets first so the axes through the sensor come out exact.
        x = (col - (self.width - 1) / 2.0) * self.cell_size
        y = ((self.height - 1) / 2.0 - row) * self.cell_size
        return (x, y)

    def cell_offsets(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-cell center offsets from the sensor, in units of cells."""
        dx = np.arange(self.width, dtype=np.float64) - (self.width - 1) / 2.0
        dy = (self.height - 1) / 2.0 - np.arange(self.height, dtype=np.float64)
        return np.broadcast_to(dx[None, :], self.shape), np.broadcast_to(dy[:, None], self.shape)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        dx, dy = self.cell_offsets()
        return dx * self.cell_size, dy * self.cell_size


def _nan_layer(spec: GridSpec) -> np.ndarray:
    return np.full(spec.shape, np.nan, dtype=np.float32)


@dataclass
class MultiLayerGrid:
    """Per-cell layers of one scan, each of shape ``(height, width)``.

    Float layers hold NaN where they are undefined. ``label_histogram`` has
    shape ``(height, width, 13)``; the last bin counts unlabeled points.
    """

    spec: GridSpec
    intensity: np.ndarray
    min_detected_height: np.ndarray
    max_detected_height: np.ndarray
    detections: np.ndarray
    label_histogram: np.ndarray
    observability: np.ndarray
    min_observed_height: np.ndarray
    meta: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, spec: GridSpec) -> "MultiLayerGrid":
        return cls(
            spec=spec,
            intensity=_nan_layer(spec),
            min_detected_height=_nan_layer(spec),
            max_detected_height=_nan_layer(spec),
            detections=np.zeros(spec.shape, dtype=np.uint32),
            label_histogram=np.zeros(spec.shape + (NUM_BINS,), dtype=np.uint32),
            observability=np.zeros(spec.shape, dtype=np.uint32),
            min_observed_height=_nan_layer(spec),
        )

    def layer(self, name: str) -> np.ndarray:
        if name not in INPUT_LAYERS and name != "detections":
            raise KeyError(f"unknown layer {name!r}")
        return getattr(self, name)

    def input_layers(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in INPUT_LAYERS}

    def freeze(self) -> "MultiLayerGrid":
        for name in INPUT_LAYERS + ("detections", "label_histogram"):
            getattr(self, name).flags.writeable = False
        return self

    def check_invariants(self) -> None:
        """Raise AssertionError if any layer invariant is violated."""

        def require(ok, what: str) -> None:
            if not ok:
                raise AssertionError(f"grid invariant violated: {what}")

        occupied = self.detections > 0
        require(np.all(self.min_detected_height[occupied] <= self.max_detected_height[occupied]), "min <= max detected height")
        for name in ("intensity", "min_detected_height", "max_detected_height"):
            layer = getattr(self, name)
            require(not np.isnan(layer[occupied]).any(), f"{name} defined on occupied cells")
            require(np.isnan(layer[~occupied]).all(), f"{name} undefined on empty cells")
        observed = self.observability > 0
        require(not np.isnan(self.min_observed_height[observed]).any(), "min_observed_height defined where observed")
        require(np.isnan(self.min_observed_height[~observed]).all(), "min_observed_height undefined where unobserved")
        require(
            np.array_equal(self.label_histogram.sum(axis=-1, dtype=np.int64), self.detections),
            "label histogram sums equal detections",
        )
