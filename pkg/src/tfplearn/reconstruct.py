"""Piecewise solution reconstruction from local-basis coefficients.

A solution is the per-cell combination of tailored basis functions plus
the cell particular solution.  Evaluation at a cell boundary needs a side:
"lower" (the default everywhere, including dataset grids) takes the cell
to the left / below, "upper" the one to the right / above.  Domain
endpoints clamp to the single adjacent cell.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .basis import (
    build_basis_1d,
    build_basis_2d,
    endpoint_slope_weights,
    fit_cell_coefficients,
    particular_solution_1d,
)
from .errors import ShapeMismatch
from .geometry import Mesh


def _cells_along_axis(breaks: np.ndarray, coords: np.ndarray, side: str) -> np.ndarray:
    idx = np.searchsorted(breaks, coords, side="right") - 1
    idx = np.clip(idx, 0, len(breaks) - 2)
    if side == "lower":
        on_break = (coords == breaks[idx]) & (idx > 0)
        idx[on_break] -= 1
    return idx


class SolutionSpace:
    """Source-independent data shared by every sample of one benchmark:
    the mesh, the frozen cell operators, and their tailored bases."""

    def __init__(self, problem, mesh: Mesh):
        self.problem = problem
        self.mesh = mesh
        self.ops = fit_cell_coefficients(problem, mesh)
        if mesh.dimension == 1:
            self.bases = [build_basis_1d(op) for op in self.ops]
            self.slope_weights = [endpoint_slope_weights(b) for b in self.bases]
            self.n_basis = 2
        else:
            self.bases = [build_basis_2d(op) for op in self.ops]
            self.n_basis = 4

    @property
    def n_coeffs(self) -> int:
        return self.mesh.n_cells * self.n_basis

    def particulars(self, f: Callable):
        """Per-cell particular solutions for one source sample."""
        if self.mesh.dimension == 1:
            return [particular_solution_1d(b, f) for b in self.bases]
        out = []
        for basis in self.bases:
            f_center = float(f(np.asarray([basis.center]))[0])
            u_p, grad_p = basis.particular_value(f_center)
            out.append(Particular2D(value=u_p, gradient=grad_p, f_center=f_center))
        return out

    def solution(self, coeffs: np.ndarray, f: Callable) -> "PiecewiseSolution":
        return PiecewiseSolution(self, coeffs, self.particulars(f), f)


@dataclass(frozen=True)
class Particular2D:
    """Particular solution of one 2D cell with its frozen source value."""

    value: Callable
    gradient: Callable
    f_center: float


@dataclass(frozen=True)
class Jump:
    """One-sided differences across an interface point: upper minus lower."""

    value: float
    slope: float
    weighted_slope: float


class PiecewiseSolution:
    """Coefficients bound to a solution space and one source sample."""

    def __init__(self, space: SolutionSpace, coeffs: np.ndarray, particulars, f):
        coeffs = np.asarray(coeffs, dtype=float)
        expect = (space.mesh.n_cells, space.n_basis)
        if coeffs.shape != expect:
            if coeffs.size == space.n_coeffs:
                coeffs = coeffs.reshape(expect)
            else:
                raise ShapeMismatch(
                    f"coefficients shape {coeffs.shape}, expected {expect}"
                )
        self.space = space
        self.coeffs = coeffs
        self.particulars = particulars
        self.f = f

    @property
    def mesh(self) -> Mesh:
        return self.space.mesh

    # -- 1D ---------------------------------------------------------------

    def _cells_1d(self, xs: np.ndarray, side: str) -> np.ndarray:
        return _cells_along_axis(self.mesh.xs, xs, side)

    def evaluate(self, points, side: str = "lower", deriv: int = 0):
        """Solution values (or x-derivatives) at points.

        In 1D ``deriv`` may be 0, 1 or 2; in 2D only 0 (use
        :meth:`gradient` for derivatives).
        """
        if self.mesh.dimension == 2:
            if deriv != 0:
                raise ValueError("use gradient() for 2D derivatives")
            return self._evaluate_2d(points, side)
        xs = np.atleast_1d(np.asarray(points, dtype=float))
        cells = self._cells_1d(xs, side)
        out = np.empty_like(xs)
        for k in np.unique(cells):
            sel = cells == k
            basis = self.space.bases[k]
            part = self.particulars[k]
            tab = [basis.values, basis.derivs, basis.second][deriv](xs[sel])
            hom = tab @ self.coeffs[k]
            par = [part.value, part.deriv, part.second][deriv](xs[sel])
            out[sel] = hom + np.asarray(par, dtype=float)
        if np.shape(points) == ():
            return float(out[0])
        return out

    # -- 2D ---------------------------------------------------------------

    def _cells_2d(self, pts: np.ndarray, side: str) -> np.ndarray:
        ix = _cells_along_axis(self.mesh.xs, pts[:, 0], side)
        iy = _cells_along_axis(self.mesh.ys, pts[:, 1], side)
        return iy * self.mesh.nx + ix

    def _evaluate_2d(self, points, side: str):
        pts = np.asarray(points, dtype=float)
        scalar = pts.ndim == 1
        pts = np.atleast_2d(pts)
        cells = self._cells_2d(pts, side)
        out = np.empty(pts.shape[0])
        for k in np.unique(cells):
            sel = cells == k
            basis = self.space.bases[k]
            part = self.particulars[k]
            out[sel] = basis.values(pts[sel]) @ self.coeffs[k] + part.value(pts[sel])
        return float(out[0]) if scalar else out

    def gradient(self, points, side: str = "lower"):
        """Spatial gradient at 2D points; shape (..., 2)."""
        pts = np.asarray(points, dtype=float)
        scalar = pts.ndim == 1
        pts = np.atleast_2d(pts)
        cells = self._cells_2d(pts, side)
        out = np.empty((pts.shape[0], 2))
        for k in np.unique(cells):
            sel = cells == k
            basis = self.space.bases[k]
            part = self.particulars[k]
            grads = basis.gradients(pts[sel])
            hom = np.einsum("nbd,b->nd", grads, self.coeffs[k])
            out[sel] = hom + part.gradient(pts[sel])
        return out[0] if scalar else out


def jump_at(solution: PiecewiseSolution, point, normal=None) -> Jump:
    """One-sided differences across an interior point: into-side minus
    from-side, with sides assigned by the normal.

    The slope difference is taken along the positive coordinate axis the
    normal is aligned with, so flipping the normal negates every entry of
    the returned :class:`Jump`.  ``weighted_slope`` multiplies each side
    by its one-sided diffusion; ``slope`` is the plain difference.
    """
    problem = solution.space.problem
    if solution.mesh.dimension == 1:
        x = float(point)
        flip = normal is not None and float(normal) < 0
        into, other = ("lower", "upper") if flip else ("upper", "lower")
        u_i = solution.evaluate(x, side=into)
        u_o = solution.evaluate(x, side=other)
        d_i = solution.evaluate(x, side=into, deriv=1)
        d_o = solution.evaluate(x, side=other, deriv=1)
        a_i = problem.a_value(x, side=into)
        a_o = problem.a_value(x, side=other)
        return Jump(
            value=u_i - u_o,
            slope=d_i - d_o,
            weighted_slope=a_i * d_i - a_o * d_o,
        )
    if normal is None:
        normal = np.array([1.0, 0.0])
    normal = np.asarray(normal, dtype=float)
    axis = int(np.argmax(np.abs(normal)))
    flip = normal[axis] < 0
    into, other = ("lower", "upper") if flip else ("upper", "lower")
    u_i = solution.evaluate(point, side=into)
    u_o = solution.evaluate(point, side=other)
    g_i = solution.gradient(point, side=into)
    g_o = solution.gradient(point, side=other)
    a_i = problem.a_value(point, side=into)
    a_o = problem.a_value(point, side=other)
    return Jump(
        value=u_i - u_o,
        slope=float(g_i[axis] - g_o[axis]),
        weighted_slope=float(a_i * g_i[axis] - a_o * g_o[axis]),
    )


def local_ode_residual(
    solution: PiecewiseSolution, cell_index: int, points
) -> np.ndarray:
    """Residual of the frozen cell equation at interior points.

    1D: -a0 u'' + c_h u - f; 2D: -a0 lap(u) + c0 u - f(center).  With the
    analytic derivatives this vanishes to rounding by construction; tests
    differentiate :meth:`PiecewiseSolution.evaluate` numerically to check
    the same identity independently.
    """
    op = solution.space.ops[cell_index]
    basis = solution.space.bases[cell_index]
    if solution.mesh.dimension == 1:
        xs = np.atleast_1d(np.asarray(points, dtype=float))
        part = solution.particulars[cell_index]
        c = solution.coeffs[cell_index]
        u = basis.values(xs) @ c + part.value(xs)
        upp = basis.second(xs) @ c + part.second(xs)
        f = np.asarray(solution.f(xs), dtype=float)
        return -op.a0 * upp + op.c_h(xs) * u - f
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    c = solution.coeffs[cell_index]
    part = solution.particulars[cell_index]
    hom = basis.values(pts) @ c
    u = hom + part.value(pts)
    if basis.degenerate:
        # basis is harmonic, lap(u_p) = -f0/a0
        lap = np.full(pts.shape[0], -part.f_center / op.a0)
    else:
        # a0 lap(phi) = c0 phi for each basis function; lap(u_p) = 0
        lap = (op.c0 / op.a0) * hom
    return -op.a0 * lap + op.c0 * u - part.f_center
