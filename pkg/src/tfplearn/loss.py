"""Physics-informed residual system over the collocation sets.

The residual vector stacks, in this fixed order: continuity points (value
difference, then plain normal-slope difference, per point), boundary
points (value minus boundary data), and interface points (value jump
minus the prescribed jump, then flux jump minus the prescribed flux
jump).  With the tailored bases the residual is affine in the coefficient vector,
r = J c - rhs, where J depends only on the mesh and problem while rhs is
linear in the source sample.  Both facts are exploited: J and the source
weights are assembled once per benchmark and reused across samples.

The flux rows honor the problem's stated convention: the plain normal
derivative by default, the diffusion-weighted flux when the problem says
so.  Continuity rows always use the plain slope, which is equivalent
inside one material branch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MeshMismatch, ShapeMismatch
from .geometry import classify_points, locate_cell
from .reconstruct import PiecewiseSolution, SolutionSpace, jump_at


@dataclass(frozen=True)
class ResidualWeights:
    """Group weights in the weighted least-squares loss."""

    continuity: float = 1.0
    jump: float = 1.0
    boundary: float = 1.0

    def __post_init__(self):
        for name in ("continuity", "jump", "boundary"):
            if getattr(self, name) <= 0:
                raise ValueError(f"weight {name} must be positive")


class ResidualSystem:
    """Assembled residual operator for one problem and mesh."""

    def __init__(
        self,
        space: SolutionSpace,
        points_per_edge: int = 1,
        weights: ResidualWeights | None = None,
        normalization: str = "sum",
    ):
        if normalization not in ("sum", "mean"):
            raise ValueError(f"normalization must be 'sum' or 'mean', got {normalization!r}")
        self.space = space
        self.weights = weights or ResidualWeights()
        self.normalization = normalization
        self.colloc = classify_points(space.mesh, points_per_edge)
        if space.mesh.dimension == 1:
            self._assemble_1d()
        else:
            self._assemble_2d()
        if normalization == "mean":
            for sl, n in (
                (self.slice_continuity, len(self.colloc.continuity)),
                (self.slice_boundary, len(self.colloc.boundary)),
                (self.slice_interface, len(self.colloc.interface)),
            ):
                if n:
                    self.row_weights[sl] /= n

    # -- assembly ---------------------------------------------------------

    def _alloc(self, n_rows: int, n_source: int) -> None:
        n = self.space.n_coeffs
        self.J = np.zeros((n_rows, n))
        self.rhs_const = np.zeros(n_rows)
        self.row_weights = np.zeros(n_rows)
        self._P = np.zeros((n_rows, n_source))
        self.n_residuals = n_rows

    def _block(self, cell: int) -> slice:
        nb = self.space.n_basis
        return slice(cell * nb, (cell + 1) * nb)

    def _assemble_1d(self) -> None:
        space = self.space
        problem = space.problem
        cs = self.colloc
        nodes = [b.quad[0] for b in space.bases]
        offsets = np.cumsum([0] + [len(n) for n in nodes])
        self.source_nodes = np.concatenate(nodes)
        self._node_slices = [
            slice(int(offsets[k]), int(offsets[k + 1]))
            for k in range(space.mesh.n_cells)
        ]

        n_rows = 2 * (len(cs.continuity) + len(cs.interface)) + len(cs.boundary)
        self._alloc(n_rows, len(self.source_nodes))
        w = self.weights
        row = 0
        self.slice_continuity = slice(0, 2 * len(cs.continuity))
        for x, m, p in zip(
            cs.continuity.points, cs.continuity.minus_cells, cs.continuity.plus_cells
        ):
            row = self._row_pair_1d(row, float(x), int(m), int(p), None, w.continuity)
        self.slice_boundary = slice(row, row + len(cs.boundary))
        for x, cell in zip(cs.boundary.points, cs.boundary.cells):
            basis = space.bases[int(cell)]
            self.J[row, self._block(int(cell))] = basis.values(float(x))
            self.rhs_const[row] = problem.boundary_value(float(x))
            self.row_weights[row] = w.boundary
            row += 1
        self.slice_interface = slice(row, n_rows)
        for x, m, p in zip(
            cs.interface.points, cs.interface.minus_cells, cs.interface.plus_cells
        ):
            row = self._row_pair_1d(row, float(x), int(m), int(p), "jump", w.jump)

    def _row_pair_1d(self, row, x, m, p, kind, weight) -> int:
        space = self.space
        problem = space.problem
        bm, bp = space.bases[m], space.bases[p]
        # value row: particular solutions vanish at cell endpoints
        self.J[row, self._block(p)] = bp.values(x)
        self.J[row, self._block(m)] -= bm.values(x)
        self.rhs_const[row] = problem.jump_value(x) if kind == "jump" else 0.0
        self.row_weights[row] = weight
        # slope row
        fac_m = fac_p = 1.0
        if kind == "jump" and problem.weighted_flux:
            fac_m = problem.a_value(x, side="lower")
            fac_p = problem.a_value(x, side="upper")
        self.J[row + 1, self._block(p)] = fac_p * bp.derivs(x)
        self.J[row + 1, self._block(m)] -= fac_m * bm.derivs(x)
        w_l_p = space.slope_weights[p][0]
        w_r_m = space.slope_weights[m][1]
        self._P[row + 1, self._node_slices[p]] = fac_p * w_l_p
        self._P[row + 1, self._node_slices[m]] = -fac_m * w_r_m
        self.rhs_const[row + 1] = problem.jump_flux(x) if kind == "jump" else 0.0
        self.row_weights[row + 1] = weight
        return row + 2

    def _unit_particular_2d(self, cell: int, pt):
        """(value, gradient) of the cell particular solution for f0 = 1."""
        basis = self.space.bases[cell]
        op = self.space.ops[cell]
        if not basis.degenerate:
            return 1.0 / op.c0, np.zeros(2)
        xc, yc = basis.center
        d = np.array([pt[0] - xc, pt[1] - yc])
        return float(-(d @ d) / (4.0 * op.a0)), -d / (2.0 * op.a0)

    def _assemble_2d(self) -> None:
        space = self.space
        problem = space.problem
        cs = self.colloc
        self.source_nodes = space.mesh.cell_centers()
        n_rows = 2 * (len(cs.continuity) + len(cs.interface)) + len(cs.boundary)
        self._alloc(n_rows, space.mesh.n_cells)
        w = self.weights
        row = 0
        self.slice_continuity = slice(0, 2 * len(cs.continuity))
        for i in range(len(cs.continuity)):
            row = self._row_pair_2d(
                row,
                cs.continuity.points[i],
                int(cs.continuity.minus_cells[i]),
                int(cs.continuity.plus_cells[i]),
                cs.continuity.normals[i],
                None,
                w.continuity,
            )
        self.slice_boundary = slice(row, row + len(cs.boundary))
        for i in range(len(cs.boundary)):
            pt = cs.boundary.points[i]
            cell = int(cs.boundary.cells[i])
            basis = space.bases[cell]
            self.J[row, self._block(cell)] = basis.values(pt)
            pu, _ = self._unit_particular_2d(cell, pt)
            self._P[row, cell] = pu
            self.rhs_const[row] = problem.boundary_value(pt)
            self.row_weights[row] = w.boundary
            row += 1
        self.slice_interface = slice(row, n_rows)
        for i in range(len(cs.interface)):
            row = self._row_pair_2d(
                row,
                cs.interface.points[i],
                int(cs.interface.minus_cells[i]),
                int(cs.interface.plus_cells[i]),
                cs.interface.normals[i],
                "jump",
                w.jump,
            )

    def _row_pair_2d(self, row, pt, m, p, normal, kind, weight) -> int:
        space = self.space
        problem = space.problem
        bm, bp = space.bases[m], space.bases[p]
        self.J[row, self._block(p)] = bp.values(pt)
        self.J[row, self._block(m)] -= bm.values(pt)
        pu_p, pg_p = self._unit_particular_2d(p, pt)
        pu_m, pg_m = self._unit_particular_2d(m, pt)
        self._P[row, p] += pu_p
        self._P[row, m] -= pu_m
        self.rhs_const[row] = problem.jump_value(pt) if kind == "jump" else 0.0
        self.row_weights[row] = weight

        fac_m = fac_p = 1.0
        if kind == "jump" and problem.weighted_flux:
            fac_m = problem.a_value(pt, side="lower")
            fac_p = problem.a_value(pt, side="upper")
        self.J[row + 1, self._block(p)] = fac_p * (bp.gradients(pt) @ normal)
        self.J[row + 1, self._block(m)] -= fac_m * (bm.gradients(pt) @ normal)
        self._P[row + 1, p] += fac_p * float(pg_p @ normal)
        self._P[row + 1, m] -= fac_m * float(pg_m @ normal)
        self.rhs_const[row + 1] = problem.jump_flux(pt) if kind == "jump" else 0.0
        self.row_weights[row + 1] = weight
        return row + 2

    # -- per-sample pieces ------------------------------------------------

    def source_values(self, f) -> np.ndarray:
        """The source sampled where the system needs it: at every cell's
        quadrature nodes in 1D, at the cell centers in 2D."""
        return np.asarray(f(self.source_nodes), dtype=float)

    def rhs_from_values(self, f_values: np.ndarray) -> np.ndarray:
        f_values = np.asarray(f_values, dtype=float)
        if f_values.shape[-1] != self._P.shape[1]:
            raise ShapeMismatch(
                f"expected {self._P.shape[1]} source values, got {f_values.shape}"
            )
        return self.rhs_const - f_values @ self._P.T

    def rhs(self, f) -> np.ndarray:
        return self.rhs_from_values(self.source_values(f))

    # -- residuals and loss ----------------------------------------------

    def residuals(self, coeffs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        coeffs = np.asarray(coeffs, dtype=float).reshape(-1)
        return self.J @ coeffs - rhs

    def loss_from_residuals(self, r: np.ndarray) -> float:
        return float(np.sum(self.row_weights * r * r))

    def total_loss(self, coeffs: np.ndarray, rhs: np.ndarray) -> float:
        return self.loss_from_residuals(self.residuals(coeffs, rhs))

    def loss_gradient_coeffs(self, coeffs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        r = self.residuals(coeffs, rhs)
        return 2.0 * (self.J.T @ (self.row_weights * r))

    def residuals_batch(self, coeffs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        """Rows of residuals for a batch: coeffs (B, n), rhs (B, n_res)."""
        return coeffs @ self.J.T - rhs

    def loss_batch(self, coeffs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        r = self.residuals_batch(coeffs, rhs)
        return np.sum(self.row_weights * r * r, axis=1)

    def gradient_batch(self, coeffs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        r = self.residuals_batch(coeffs, rhs)
        return 2.0 * ((self.row_weights * r) @ self.J)

    # -- slow cross-check route -------------------------------------------

    def residuals_direct(self, solution: PiecewiseSolution) -> np.ndarray:
        """Residuals evaluated through the reconstruction itself, point by
        point.  Slow; exists to cross-check the assembled J and rhs."""
        mesh = solution.space.mesh
        own = self.space.mesh
        same = mesh.dimension == own.dimension and np.array_equal(mesh.xs, own.xs)
        if same and mesh.dimension == 2:
            same = np.array_equal(mesh.ys, own.ys)
        if not same:
            raise MeshMismatch("solution was built on a different mesh")
        problem = self.space.problem
        two_d = self.space.mesh.dimension == 2
        out = []
        cs = self.colloc
        for i in range(len(cs.continuity)):
            pt = cs.continuity.points[i]
            normal = cs.continuity.normals[i] if two_d else None
            j = jump_at(solution, pt, normal)
            out += [j.value, j.slope]
        for i in range(len(cs.boundary)):
            pt = cs.boundary.points[i]
            val = solution.evaluate(pt)
            out.append(val - problem.boundary_value(pt))
        for i in range(len(cs.interface)):
            pt = cs.interface.points[i]
            normal = cs.interface.normals[i] if two_d else None
            j = jump_at(solution, pt, normal)
            flux = j.weighted_slope if problem.weighted_flux else j.slope
            out += [
                j.value - problem.jump_value(pt),
                flux - problem.jump_flux(pt),
            ]
        return np.asarray(out)


class DataTerm:
    """Optional data-assimilation term: mean squared misfit to observed
    solution values, (1/N0) sum_k |u(y_k) - u_obs_k|^2, times a weight.

    Observation points must lie off cell boundaries so the evaluation side
    is unambiguous.
    """

    def __init__(self, space: SolutionSpace, points, weight: float = 1.0):
        self.space = space
        self.weight = float(weight)
        pts = np.asarray(points, dtype=float)
        self.points = pts
        self.cells = np.array([locate_cell(space.mesh, p) for p in pts], dtype=int)
        self.n_obs = len(pts)
        self.D = np.zeros((self.n_obs, space.n_coeffs))
        nb = space.n_basis
        for i, (p, k) in enumerate(zip(pts, self.cells)):
            self.D[i, k * nb : (k + 1) * nb] = space.bases[k].values(p)

    def offsets(self, particulars) -> np.ndarray:
        """Particular-solution values at the observation points."""
        out = np.empty(self.n_obs)
        for i, (p, k) in enumerate(zip(self.points, self.cells)):
            part = particulars[k]
            if self.space.mesh.dimension == 1:
                out[i] = float(part.value(p))
            else:
                out[i] = float(part.value(np.asarray([p]))[0])
        return out

    def misfit(self, coeffs, offsets, observed) -> np.ndarray:
        coeffs = np.asarray(coeffs, dtype=float).reshape(-1)
        return self.D @ coeffs + offsets - np.asarray(observed, dtype=float)

    def loss(self, coeffs, offsets, observed) -> float:
        m = self.misfit(coeffs, offsets, observed)
        return self.weight * float(np.mean(m * m))

    def gradient(self, coeffs, offsets, observed) -> np.ndarray:
        m = self.misfit(coeffs, offsets, observed)
        return (2.0 * self.weight / self.n_obs) * (self.D.T @ m)
