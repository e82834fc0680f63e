"""Meshes, cell numbering, and collocation point construction."""

import numpy as np
import pytest

from tfplearn.errors import (
    InterfaceNotOnGrid,
    OutOfDomain,
    SideRequired,
    ZeroCells,
)
from tfplearn.geometry import (
    BoundarySet,
    InterfaceSegment,
    build_mesh,
    classify_points,
    locate_cell,
    locate_cell_sided,
)

_VSEG = InterfaceSegment(axis=0, value=0.5, lo=0.0, hi=1.0)


def test_1d_mesh_layout():
    mesh = build_mesh((0.0, 1.0), 32, interface=(0.5,))
    assert mesh.dimension == 1
    assert mesh.n_cells == 32
    assert mesh.h_max == pytest.approx(1.0 / 32.0)
    assert mesh.interfaces == (0.5,)
    lo, hi = mesh.cell_bounds(3)
    assert (lo, hi) == (pytest.approx(3 / 32), pytest.approx(4 / 32))
    assert mesh.cell_center(0) == pytest.approx(1 / 64)


def test_2d_mesh_layout():
    mesh = build_mesh(((0.0, 1.0), (0.0, 1.0)), (16, 16), interface=(_VSEG,))
    assert mesh.dimension == 2
    assert mesh.n_cells == 256
    # x-fastest numbering: cell 17 is (ix=1, iy=1)
    (xl, xr), (yb, yt) = mesh.cell_bounds(17)
    assert xl == pytest.approx(1 / 16) and yb == pytest.approx(1 / 16)
    centers = mesh.cell_centers()
    assert centers.shape == (256, 2)
    assert centers[0] == pytest.approx([1 / 32, 1 / 32])
    assert centers[1] == pytest.approx([3 / 32, 1 / 32])
    assert centers[16] == pytest.approx([1 / 32, 3 / 32])


def test_interface_must_sit_on_a_breakpoint():
    build_mesh((0.0, 1.0), 10, interface=(0.5,))
    with pytest.raises(InterfaceNotOnGrid):
        build_mesh((0.0, 1.0), 10, interface=(0.45,))
    with pytest.raises(InterfaceNotOnGrid):
        build_mesh(((0.0, 1.0), (0.0, 1.0)), (5, 5), interface=(_VSEG,))


def test_degenerate_meshes_are_rejected():
    with pytest.raises(ZeroCells):
        build_mesh((0.0, 1.0), 0)


def test_locate_cell_1d():
    mesh = build_mesh((0.0, 1.0), 4)
    assert locate_cell(mesh, 0.1) == 0
    assert locate_cell(mesh, 0.99) == 3
    assert locate_cell(mesh, 1.0) == 3
    with pytest.raises(OutOfDomain):
        locate_cell(mesh, 1.2)


def test_locate_cell_sided_at_interface():
    mesh = build_mesh((0.0, 1.0), 4, interface=(0.5,))
    assert locate_cell_sided(mesh, 0.5, side="lower") == 1
    assert locate_cell_sided(mesh, 0.5, side="upper") == 2
    with pytest.raises(SideRequired):
        locate_cell_sided(mesh, 0.5, side=None)


def test_locate_cell_2d():
    mesh = build_mesh(((0.0, 1.0), (0.0, 1.0)), (4, 4))
    assert locate_cell(mesh, (0.1, 0.1)) == 0
    assert locate_cell(mesh, (0.9, 0.1)) == 3
    assert locate_cell(mesh, (0.1, 0.9)) == 12


def test_collocation_counts_1d():
    """Interior breaks split into continuity and interface points."""
    mesh = build_mesh((0.0, 1.0), 4, interface=(0.5,))
    sets = classify_points(mesh)
    assert sorted(sets.continuity.points.tolist()) == [0.25, 0.75]
    assert sets.interface.points.tolist() == [0.5]
    assert sorted(sets.boundary.points.tolist()) == [0.0, 1.0]
    # minus cell is the lower neighbor, normal points up
    assert sets.interface.minus_cells.tolist() == [1]
    assert sets.interface.plus_cells.tolist() == [2]
    assert np.all(sets.interface.normals > 0)
    assert isinstance(sets.boundary, BoundarySet)
    assert sets.boundary.cells.tolist() in ([0, 3], [3, 0])


def test_collocation_counts_match_square_system_1d():
    mesh = build_mesh((0.0, 1.0), 32, interface=(0.5,))
    sets = classify_points(mesh)
    rows = 2 * len(sets.continuity) + 2 * len(sets.interface) + len(sets.boundary)
    assert len(sets.continuity) == 30
    assert len(sets.interface) == 1
    assert len(sets.boundary) == 2
    assert rows == 2 * mesh.n_cells


def test_collocation_counts_match_square_system_2d():
    mesh = build_mesh(((0.0, 1.0), (0.0, 1.0)), (16, 16), interface=(_VSEG,))
    sets = classify_points(mesh)
    # 15 interior vertical lines of 16 edges each, one line is the
    # interface; 15 interior horizontal lines of 16 edges each
    assert len(sets.interface) == 16
    assert len(sets.continuity) == 14 * 16 + 15 * 16
    assert len(sets.boundary) == 4 * 16
    rows = 2 * len(sets.continuity) + 2 * len(sets.interface) + len(sets.boundary)
    assert rows == 4 * mesh.n_cells


def test_interface_edges_oriented_lower_to_upper():
    mesh = build_mesh(((0.0, 1.0), (0.0, 1.0)), (8, 8), interface=(_VSEG,))
    sets = classify_points(mesh)
    assert len(sets.interface) == 8
    assert np.allclose(sets.interface.points[:, 0], 0.5)
    assert np.allclose(sets.interface.normals, [1.0, 0.0])
    assert np.all(sets.interface.plus_cells == sets.interface.minus_cells + 1)


def test_edge_midpoints_by_default():
    mesh = build_mesh(((0.0, 1.0), (0.0, 1.0)), (2, 2))
    sets = classify_points(mesh)
    # the single interior vertical line carries edge midpoints
    vertical = sets.continuity.points[np.isclose(sets.continuity.points[:, 0], 0.5)]
    assert sorted(vertical[:, 1].tolist()) == [0.25, 0.75]


def test_points_per_edge_scales_counts():
    mesh = build_mesh(((0.0, 1.0), (0.0, 1.0)), (4, 4), interface=(_VSEG,))
    one = classify_points(mesh, points_per_edge=1)
    three = classify_points(mesh, points_per_edge=3)
    assert len(three.continuity) == 3 * len(one.continuity)
    assert len(three.interface) == 3 * len(one.interface)
    assert len(three.boundary) == 3 * len(one.boundary)
    # multi-point edges use interior points, never the edge endpoints
    ys = three.interface.points[:, 1]
    assert not np.any(np.isclose(ys % 0.25, 0.0))


def test_classification_is_deterministic():
    mesh = build_mesh(((0.0, 1.0), (0.0, 1.0)), (5, 5))
    a = classify_points(mesh)
    b = classify_points(mesh)
    assert np.array_equal(a.continuity.points, b.continuity.points)
    assert np.array_equal(a.boundary.cells, b.boundary.cells)
