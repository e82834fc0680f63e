"""Interface-aware meshes and collocation point sets.

A mesh is a uniform partition of the domain whose breakpoints contain every
interface location.  Collocation points are classified into three disjoint
sets: continuity points on interior shared boundaries (X^C), boundary points
(X^B), and interface points (X^J).  Interface normals point from the lower
subdomain into the upper one, i.e. rightwards in 1D and in the +x / +y
direction for axis-aligned 2D segments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InterfaceNotOnGrid, OutOfDomain, SideRequired, ZeroCells
from .special import gauss_legendre

_ALIGN_TOL = 1e-9


@dataclass(frozen=True)
class InterfaceSegment:
    """Axis-aligned interface segment in 2D.

    ``axis`` is the frozen coordinate: 0 means a vertical segment
    {x = value, lo <= y <= hi}, 1 a horizontal one.
    """

    axis: int
    value: float
    lo: float
    hi: float

    def contains_span(self, lo: float, hi: float) -> bool:
        return self.lo - _ALIGN_TOL <= lo and hi <= self.hi + _ALIGN_TOL


@dataclass(frozen=True)
class Mesh:
    """Tensor-product mesh over an interval or a rectangle.

    1D meshes have ``dimension == 1``, breakpoints ``xs`` and interface
    points ``interfaces``; 2D meshes carry both coordinate arrays and
    interface segments.  Cells are numbered x-fastest: linear cell index
    ``iy * nx + ix`` in 2D, plain ``ix`` in 1D.
    """

    dimension: int
    xs: np.ndarray
    ys: np.ndarray | None = None
    interfaces: tuple = ()
    segments: tuple[InterfaceSegment, ...] = field(default=())

    @property
    def nx(self) -> int:
        return len(self.xs) - 1

    @property
    def ny(self) -> int:
        return 0 if self.ys is None else len(self.ys) - 1

    @property
    def n_cells(self) -> int:
        return self.nx if self.dimension == 1 else self.nx * self.ny

    @property
    def h_max(self) -> float:
        hx = float(np.max(np.diff(self.xs)))
        if self.dimension == 1:
            return hx
        hy = float(np.max(np.diff(self.ys)))
        return max(hx, hy)

    def cell_bounds(self, index: int) -> tuple:
        """(lo, hi) in 1D; ((x_lo, x_hi), (y_lo, y_hi)) in 2D."""
        if self.dimension == 1:
            return float(self.xs[index]), float(self.xs[index + 1])
        iy, ix = divmod(index, self.nx)
        return (
            (float(self.xs[ix]), float(self.xs[ix + 1])),
            (float(self.ys[iy]), float(self.ys[iy + 1])),
        )

    def cell_center(self, index: int):
        if self.dimension == 1:
            lo, hi = self.cell_bounds(index)
            return 0.5 * (lo + hi)
        (xl, xr), (yl, yr) = self.cell_bounds(index)
        return 0.5 * (xl + xr), 0.5 * (yl + yr)

    def cell_centers(self) -> np.ndarray:
        """Centers of all cells in linear cell order."""
        cx = 0.5 * (self.xs[:-1] + self.xs[1:])
        if self.dimension == 1:
            return cx.copy()
        cy = 0.5 * (self.ys[:-1] + self.ys[1:])
        gx, gy = np.meshgrid(cx, cy)
        return np.column_stack([gx.ravel(), gy.ravel()])


def _uniform_breaks(lo: float, hi: float, n: int) -> np.ndarray:
    edges = lo + (hi - lo) * np.arange(n + 1) / n
    edges[-1] = hi
    return edges


def _check_on_grid(value: float, breaks: np.ndarray, what: str) -> None:
    if np.min(np.abs(breaks - value)) > _ALIGN_TOL:
        raise InterfaceNotOnGrid(
            f"{what} at {value} does not coincide with a cell boundary"
        )


def build_mesh(domain, resolution, interface=()) -> Mesh:
    """Uniform mesh on ``domain`` whose breakpoints contain the interface.

    ``domain`` is ``(lo, hi)`` in 1D or ``((x_lo, x_hi), (y_lo, y_hi))`` in
    2D; ``resolution`` is the cell count M, or ``(nx, ny)``; ``interface``
    is a sequence of points (1D) or :class:`InterfaceSegment` (2D).
    """
    two_d = hasattr(domain[0], "__len__")
    if two_d:
        try:
            nx, ny = resolution
        except TypeError:
            nx = ny = int(resolution)
        if nx < 1 or ny < 1:
            raise ZeroCells(f"resolution {resolution} yields no cells")
        (x_lo, x_hi), (y_lo, y_hi) = domain
        xs = _uniform_breaks(x_lo, x_hi, int(nx))
        ys = _uniform_breaks(y_lo, y_hi, int(ny))
        segments = tuple(interface)
        for seg in segments:
            breaks = xs if seg.axis == 0 else ys
            _check_on_grid(seg.value, breaks, "interface segment")
        return Mesh(dimension=2, xs=xs, ys=ys, interfaces=(), segments=segments)

    m = int(resolution)
    if m < 1:
        raise ZeroCells(f"resolution {resolution} yields no cells")
    lo, hi = float(domain[0]), float(domain[1])
    xs = _uniform_breaks(lo, hi, m)
    points = tuple(sorted(float(p) for p in interface))
    for p in points:
        _check_on_grid(p, xs, "interface point")
    # snap interface points onto the exact breakpoint values
    snapped = tuple(float(xs[int(np.argmin(np.abs(xs - p)))]) for p in points)
    return Mesh(dimension=1, xs=xs, interfaces=snapped)


def locate_cell(mesh: Mesh, point) -> int:
    """Cell index containing ``point``; shared boundaries resolve to the
    left/lower cell (tie-break convention used throughout)."""
    if mesh.dimension == 1:
        return _locate_axis(mesh.xs, float(point))
    x, y = float(point[0]), float(point[1])
    ix = _locate_axis(mesh.xs, x)
    iy = _locate_axis(mesh.ys, y)
    return iy * mesh.nx + ix


def _locate_axis(breaks: np.ndarray, v: float) -> int:
    if v < breaks[0] or v > breaks[-1]:
        raise OutOfDomain(f"point {v} outside [{breaks[0]}, {breaks[-1]}]")
    idx = int(np.searchsorted(breaks, v, side="left"))
    if idx < len(breaks) and breaks[idx] == v:
        return max(idx - 1, 0)
    return idx - 1


def locate_cell_sided(mesh: Mesh, point, side: str | None = None) -> int:
    """Like :func:`locate_cell` but honoring an explicit one-sided choice.

    ``side`` is "lower" (left/below, the tie-break default) or "upper".
    Raises :class:`SideRequired` when the point sits on an interior shared
    boundary and no side is given.
    """
    if side not in (None, "lower", "upper"):
        raise ValueError(f"side must be 'lower' or 'upper', got {side!r}")
    if mesh.dimension == 1:
        x = float(point)
        on_break = _on_interior_break(mesh.xs, x)
        if on_break and side is None:
            raise SideRequired(f"point {x} lies on a shared cell boundary")
        return _locate_axis_sided(mesh.xs, x, side)
    x, y = float(point[0]), float(point[1])
    on_x = _on_interior_break(mesh.xs, x)
    on_y = _on_interior_break(mesh.ys, y)
    if (on_x or on_y) and side is None:
        raise SideRequired(f"point {point} lies on a shared cell boundary")
    ix = _locate_axis_sided(mesh.xs, x, side)
    iy = _locate_axis_sided(mesh.ys, y, side)
    return iy * mesh.nx + ix


def _on_interior_break(breaks: np.ndarray, v: float) -> bool:
    idx = int(np.searchsorted(breaks, v, side="left"))
    return 0 < idx < len(breaks) - 1 and breaks[idx] == v


def _locate_axis_sided(breaks: np.ndarray, v: float, side: str | None) -> int:
    idx = _locate_axis(breaks, v)
    if side == "upper" and _on_interior_break(breaks, v):
        return idx + 1
    return idx


@dataclass(frozen=True)
class PointSet:
    """Collocation points on shared boundaries with jump orientation.

    ``points``: (n,) in 1D or (n, 2) in 2D; ``minus_cells``/``plus_cells``
    are the linear cell indices on either side of the boundary; ``normals``
    point from the minus cell into the plus cell.
    """

    points: np.ndarray
    minus_cells: np.ndarray
    plus_cells: np.ndarray
    normals: np.ndarray

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class BoundarySet:
    """Boundary collocation points and the cells they are evaluated from."""

    points: np.ndarray
    cells: np.ndarray

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class CollocationSets:
    continuity: PointSet
    boundary: BoundarySet
    interface: PointSet


def _is_on_interface_1d(mesh: Mesh, x: float) -> bool:
    return any(abs(x - p) <= _ALIGN_TOL for p in mesh.interfaces)


def _edge_on_segment(mesh: Mesh, axis: int, value: float, lo: float, hi: float) -> bool:
    for seg in mesh.segments:
        if seg.axis == axis and abs(seg.value - value) <= _ALIGN_TOL:
            if seg.contains_span(lo, hi):
                return True
    return False


def classify_points(mesh: Mesh, points_per_edge: int = 1) -> CollocationSets:
    """Build the collocation sets X^C, X^B, X^J for a mesh.

    In 1D every interior breakpoint contributes one point; the 2D default
    places one point at each shared-edge midpoint, or ``points_per_edge``
    Gauss points along the edge when more are requested.  Construction
    order is deterministic.
    """
    if mesh.dimension == 1:
        return _classify_1d(mesh)
    return _classify_2d(mesh, points_per_edge)


def _classify_1d(mesh: Mesh) -> CollocationSets:
    cont_pts, cont_minus = [], []
    jump_pts, jump_minus = [], []
    for i in range(1, mesh.nx):
        x = float(mesh.xs[i])
        if _is_on_interface_1d(mesh, x):
            jump_pts.append(x)
            jump_minus.append(i - 1)
        else:
            cont_pts.append(x)
            cont_minus.append(i - 1)

    def _pointset(pts, minus):
        pts = np.asarray(pts, dtype=float)
        minus = np.asarray(minus, dtype=int)
        return PointSet(
            points=pts,
            minus_cells=minus,
            plus_cells=minus + 1,
            normals=np.ones(len(pts)),
        )

    boundary = BoundarySet(
        points=np.array([mesh.xs[0], mesh.xs[-1]], dtype=float),
        cells=np.array([0, mesh.nx - 1], dtype=int),
    )
    return CollocationSets(
        continuity=_pointset(cont_pts, cont_minus),
        boundary=boundary,
        interface=_pointset(jump_pts, jump_minus),
    )


def _edge_points(lo: float, hi: float, k: int) -> np.ndarray:
    if k == 1:
        return np.array([0.5 * (lo + hi)])
    rule = gauss_legendre(k)
    pts, _ = rule.mapped(lo, hi)
    return pts


def _classify_2d(mesh: Mesh, k: int) -> CollocationSets:
    if k < 1:
        raise ValueError("points_per_edge must be >= 1")
    cont: list[tuple] = []
    jump: list[tuple] = []
    bnd: list[tuple] = []
    nx, ny = mesh.nx, mesh.ny

    # vertical edges: x = xs[i], y in (ys[j], ys[j+1]); normal +x
    for i in range(nx + 1):
        x = float(mesh.xs[i])
        for j in range(ny):
            y_lo, y_hi = float(mesh.ys[j]), float(mesh.ys[j + 1])
            pts = [(x, y) for y in _edge_points(y_lo, y_hi, k)]
            if i == 0:
                bnd += [(p, j * nx + 0) for p in pts]
            elif i == nx:
                bnd += [(p, j * nx + nx - 1) for p in pts]
            else:
                minus = j * nx + (i - 1)
                rec = [(p, minus, minus + 1, (1.0, 0.0)) for p in pts]
                if _edge_on_segment(mesh, 0, x, y_lo, y_hi):
                    jump += rec
                else:
                    cont += rec

    # horizontal edges: y = ys[j], x in (xs[i], xs[i+1]); normal +y
    for j in range(ny + 1):
        y = float(mesh.ys[j])
        for i in range(nx):
            x_lo, x_hi = float(mesh.xs[i]), float(mesh.xs[i + 1])
            pts = [(x, y) for x in _edge_points(x_lo, x_hi, k)]
            if j == 0:
                bnd += [(p, 0 * nx + i) for p in pts]
            elif j == ny:
                bnd += [(p, (ny - 1) * nx + i) for p in pts]
            else:
                minus = (j - 1) * nx + i
                rec = [(p, minus, minus + nx, (0.0, 1.0)) for p in pts]
                if _edge_on_segment(mesh, 1, y, x_lo, x_hi):
                    jump += rec
                else:
                    cont += rec

    def _pointset(records) -> PointSet:
        if not records:
            return PointSet(
                points=np.zeros((0, 2)),
                minus_cells=np.zeros(0, dtype=int),
                plus_cells=np.zeros(0, dtype=int),
                normals=np.zeros((0, 2)),
            )
        pts = np.array([r[0] for r in records], dtype=float)
        return PointSet(
            points=pts,
            minus_cells=np.array([r[1] for r in records], dtype=int),
            plus_cells=np.array([r[2] for r in records], dtype=int),
            normals=np.array([r[3] for r in records], dtype=float),
        )

    boundary = BoundarySet(
        points=np.array([r[0] for r in bnd], dtype=float),
        cells=np.array([r[1] for r in bnd], dtype=int),
    )
    return CollocationSets(
        continuity=_pointset(cont),
        boundary=boundary,
        interface=_pointset(jump),
    )
