from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from semgrid.grid import INPUT_LAYERS, GridSpec, MultiLayerGrid

SPEC = GridSpec()


def test_defaults():
    assert SPEC.shape == (501, 1001)
    assert SPEC.num_cells == 1001 * 501
    assert SPEC.cell_size == pytest.approx(0.1)
    assert SPEC.center_cell == (500, 250)
    x0, x1, y0, y1 = SPEC.extent
    assert (x1 - x0, y1 - y0) == pytest.approx((100.1, 50.1))
    assert (x0, y1) == pytest.approx((-50.05, 25.05))


@pytest.mark.parametrize("xy,cell", [((0, 0), (500, 250)), ((10.0, 0), (600, 250)), ((50.1, 0), None), ((0, 25.06), None)])
def test_world_to_cell(xy, cell):
    assert SPEC.world_to_cell(*xy) == cell


def test_direction_conventions():
    # +x to the right (columns grow), +y up (rows shrink).
    assert SPEC.world_to_cell(1.0, 0)[0] > 500
    assert SPEC.world_to_cell(0, 1.0)[1] < 250


@pytest.mark.parametrize("cell,xy", [((500, 250), (0.0, 0.0)), ((600, 250), (10.0, 0.0)), ((0, 0), (-50.0, 25.0))])
def test_cell_center(cell, xy):
    assert SPEC.cell_center(*cell) == pytest.approx(xy, abs=1e-12)


def test_cell_center_on_axes_is_exact():
    assert SPEC.cell_center(600, 250) == (10.0, 0.0)


def test_cell_center_out_of_range():
    with pytest.raises(IndexError):
        SPEC.cell_center(1001, 0)


_x = st.floats(-50.0499, 50.0499)
_y = st.floats(-25.0499, 25.0499)


@given(_x, _y)
def test_round_trip(x, y):
    c = SPEC.world_to_cell(x, y)
    assert c is not None
    assert SPEC.world_to_cell(*SPEC.cell_center(*c)) == c


@given(_x, _y)
def test_vectorized_matches_scalar(x, y):
    col, row, inside = SPEC.world_to_cells(np.array([x]), np.array([y]))
    assert inside[0]
    assert (int(col[0]), int(row[0])) == SPEC.world_to_cell(x, y)


def test_every_cell_center_contained():
    xs, ys = SPEC.cell_centers()
    col, row, inside = SPEC.world_to_cells(xs, ys)
    assert inside.all()
    np.testing.assert_array_equal(col, np.broadcast_to(np.arange(1001), SPEC.shape))
    np.testing.assert_array_equal(row, np.broadcast_to(np.arange(501)[:, None], SPEC.shape))


def test_flat_index_is_unique_per_cell():
    xs, ys = SPEC.cell_centers()
    flat, _ = SPEC.flat_index(xs.ravel(), ys.ravel())
    assert len(np.unique(flat)) == SPEC.num_cells


def test_rejects_degenerate_spec():
    with pytest.raises(ValueError):
        GridSpec(width=0)
    with pytest.raises(ValueError):
        GridSpec(cell_size=0.0)


def test_empty_grid():
    g = MultiLayerGrid.empty(SPEC)
    g.check_invariants()
    assert set(g.input_layers()) == set(INPUT_LAYERS)
    assert g.label_histogram.shape == (501, 1001, 13)
    assert np.isnan(g.intensity).all() and not g.observability.any()
    with pytest.raises(KeyError):
        g.layer("label")


def test_freeze():
    g = MultiLayerGrid.empty(GridSpec(width=3, height=3)).freeze()
    with pytest.raises(ValueError):
        g.observability[0, 0] = 1


def test_invariant_violation_detected():
    g = MultiLayerGrid.empty(GridSpec(width=3, height=3))
    g.detections[1, 1] = 1
    with pytest.raises(AssertionError):
        g.check_invariants()
