"""Ground-truth finite-difference solver and the least-squares oracle.

The reference discretization is a second-order scheme on a fine uniform
grid with the interface on a grid line.  Interface nodes carry one
unknown per side; the two extra equations per node are the discrete jump
conditions, with one-sided second-order stencils for the flux.  This is
a different discretization family from the tailored-basis pipeline, so
agreement between the two is a genuine cross-check.

For reaction-dominated problems the resolution escalates (by doubling)
until the narrowest layer, of width sqrt(a/b), holds at least 8 nodes.

The 2D solver has two routes that produce identical answers: a sparse
direct solve of the full coupled system, and a fast path for coefficients
that do not depend on y, which decouples the system into per-sine-mode
1D interface problems via the type-I discrete sine transform.  The fast
path is an orthogonal change of basis of the same discrete system, which
the tests verify against the sparse route.

The coefficient oracle lives here too: the exact minimizer of the
collocation loss via weighted least squares, used to test the
convergence claims without any network in the loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft
from scipy.linalg import solve_banded, solve_triangular
from scipy.sparse import csc_matrix
from scipy.sparse.linalg import splu

from .errors import (
    InterfaceNotOnGrid,
    RankDeficient,
    SingularSystem,
    UnresolvedLayer,
)
from .geometry import Mesh
from .loss import ResidualSystem
from .reconstruct import SolutionSpace

_LAYER_NODES = 8
_MAX_N_1D = 1 << 16
_MAX_N_2D = 1 << 11
_RIDGE = 1e-12
_CHUNK_BYTES = 1 << 27


def pick_resolution(problem, base: int | None = None) -> int:
    """Reference grid size: doubled from the base until the narrowest
    reaction layer holds at least 8 nodes."""
    n = base if base is not None else (256 if problem.dimension == 1 else 128)
    cap = _MAX_N_1D if problem.dimension == 1 else _MAX_N_2D
    width = problem.layer_width()
    while n * width < _LAYER_NODES and n < cap:
        n *= 2
    if n * width < _LAYER_NODES:
        raise UnresolvedLayer(
            f"layer width {width:.3e} needs more than {cap} cells to resolve"
        )
    return int(n)


def _field_on_line(f, xs: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(f(xs), dtype=float)
    except (TypeError, ValueError):
        out = None
    if out is None or out.shape != xs.shape:
        out = np.array([float(f(float(x))) for x in xs])
    return out


def _field_on_grid(f, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Field values with rows indexed by y and columns by x."""
    if hasattr(f, "on_grid"):
        return np.asarray(f.on_grid(xs, ys), dtype=float)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    return np.asarray(f(pts), dtype=float).reshape(len(ys), len(xs))


# ---------------------------------------------------------------------------
# 1D


@dataclass(frozen=True)
class ReferenceSolution1D:
    """Node values with the lower-side value stored at interface nodes and
    the upper-side values kept alongside."""

    nodes: np.ndarray
    values: np.ndarray
    interface_indices: tuple[int, ...]
    upper_values: np.ndarray
    resolution: int
    problem_name: str

    def side_values(self, side: str = "lower") -> np.ndarray:
        out = self.values.copy()
        if side == "upper":
            for idx, v in zip(self.interface_indices, self.upper_values):
                out[idx] = v
        return out

    def restrict(self, n_coarse: int) -> "ReferenceSolution1D":
        """Nested restriction onto a coarser uniform grid."""
        stride, rem = divmod(self.resolution, n_coarse)
        if rem:
            raise ValueError(f"{n_coarse} does not divide {self.resolution}")
        idx = np.arange(0, self.resolution + 1, stride)
        new_ifaces = []
        for g in self.interface_indices:
            q, r = divmod(g, stride)
            if r:
                raise InterfaceNotOnGrid("interface falls off the coarse grid")
            new_ifaces.append(q)
        return ReferenceSolution1D(
            nodes=self.nodes[idx],
            values=self.values[idx],
            interface_indices=tuple(new_ifaces),
            upper_values=self.upper_values.copy(),
            resolution=n_coarse,
            problem_name=self.problem_name,
        )


def _interface_nodes(problem, nodes: np.ndarray) -> list[int]:
    n = len(nodes) - 1
    out = []
    pts = problem.interface if problem.dimension == 1 else ()
    for p in pts:
        idx = int(np.argmin(np.abs(nodes - p)))
        if abs(nodes[idx] - p) > 1e-9:
            raise InterfaceNotOnGrid(f"interface {p} not on the reference grid")
        out.append(idx)
    for g0, g1 in zip(out, out[1:]):
        if g1 - g0 < 3:
            raise InterfaceNotOnGrid("interface points closer than 3 grid cells")
    # one-sided flux stencils reach two nodes into each side
    if out and (out[0] < 3 or out[-1] > n - 3):
        raise InterfaceNotOnGrid("interface too close to the boundary")
    return out


class _Operator1D:
    """Factorized 1D interface system for one problem and resolution."""

    def __init__(self, problem, n: int):
        self.problem = problem
        self.n = n
        nodes = np.linspace(0.0, 1.0, n + 1)
        self.nodes = nodes
        self.gammas = _interface_nodes(problem, nodes)
        h = 1.0 / n

        # unknown ids: one per interior node, interface nodes doubled
        id_lower = np.full(n + 1, -1, dtype=int)
        id_upper = np.full(n + 1, -1, dtype=int)
        nid = 0
        for i in range(1, n):
            id_lower[i] = nid
            nid += 1
            if i in self.gammas:
                id_upper[i] = nid
                nid += 1
            else:
                id_upper[i] = id_lower[i]
        self.id_lower, self.id_upper, self.n_unknowns = id_lower, id_upper, nid

        rows, cols, vals = [], [], []
        # boundary lifts: rhs += lift @ [g_B(0), g_B(1)]
        self.lift = np.zeros((nid, 2))
        self.pde_rows = np.full(nid, -1, dtype=int)  # node index per PDE row

        def add(r, c, v):
            rows.append(r)
            cols.append(c)
            vals.append(v)

        for i in range(1, n):
            if i in self.gammas:
                continue
            x = float(nodes[i])
            a = problem.a_value(x)
            b = problem.b_value(x)
            r = id_lower[i]
            self.pde_rows[r] = i
            add(r, id_lower[i], 2.0 * a / h**2 + b)
            if i - 1 == 0:
                self.lift[r, 0] = a / h**2
            else:
                add(r, id_upper[i - 1], -a / h**2)
            if i + 1 == n:
                self.lift[r, 1] = a / h**2
            else:
                add(r, id_lower[i + 1], -a / h**2)

        self.jump_rows = []  # (value_row, flux_row, node index)
        for g in self.gammas:
            x = float(nodes[g])
            rv, rf = id_lower[g], id_upper[g]
            add(rv, id_upper[g], 1.0)
            add(rv, id_lower[g], -1.0)
            fac_lo = fac_hi = 1.0
            if problem.weighted_flux:
                fac_lo = problem.a_value(x, side="lower")
                fac_hi = problem.a_value(x, side="upper")
            # one-sided slope from above minus one-sided slope from below
            add(rf, id_upper[g], fac_hi * -3.0 / (2 * h))
            add(rf, id_lower[g + 1], fac_hi * 4.0 / (2 * h))
            add(rf, id_lower[g + 2], fac_hi * -1.0 / (2 * h))
            add(rf, id_lower[g], fac_lo * -3.0 / (2 * h))
            add(rf, id_upper[g - 1], fac_lo * 4.0 / (2 * h))
            add(rf, id_upper[g - 2], fac_lo * -1.0 / (2 * h))
            self.jump_rows.append((rv, rf, g))

        A = csc_matrix((vals, (rows, cols)), shape=(nid, nid))
        try:
            self._lu = splu(A)
        except RuntimeError as err:
            raise SingularSystem(f"reference system factorization failed: {err}")

    def _one_rhs(self, f_nodes: np.ndarray) -> np.ndarray:
        problem, nodes = self.problem, self.nodes
        rhs = np.zeros(self.n_unknowns)
        mask = self.pde_rows >= 0
        rhs[mask] = f_nodes[self.pde_rows[mask]]
        gb = np.array(
            [problem.boundary_value(nodes[0]), problem.boundary_value(nodes[-1])]
        )
        rhs += self.lift @ gb
        for rv, rf, g in self.jump_rows:
            x = float(nodes[g])
            rhs[rv] = problem.jump_value(x)
            rhs[rf] = problem.jump_flux(x)
        return rhs

    def _pack(self, u: np.ndarray) -> ReferenceSolution1D:
        problem, nodes, n = self.problem, self.nodes, self.n
        values = np.empty(n + 1)
        values[0] = problem.boundary_value(nodes[0])
        values[-1] = problem.boundary_value(nodes[-1])
        values[1:-1] = u[self.id_lower[1:n]]
        uppers = np.array([u[self.id_upper[g]] for g in self.gammas])
        return ReferenceSolution1D(
            nodes=nodes,
            values=values,
            interface_indices=tuple(self.gammas),
            upper_values=uppers,
            resolution=n,
            problem_name=problem.name,
        )

    def solve_batch(self, fields) -> list[ReferenceSolution1D]:
        rhs = np.column_stack(
            [self._one_rhs(_field_on_line(f, self.nodes)) for f in fields]
        )
        u = self._lu.solve(rhs)
        if not np.all(np.isfinite(u)):
            raise SingularSystem("reference solve produced non-finite values")
        return [self._pack(u[:, k]) for k in range(u.shape[1])]

    def solve(self, f) -> ReferenceSolution1D:
        return self.solve_batch([f])[0]


# ---------------------------------------------------------------------------
# 2D


@dataclass(frozen=True)
class ReferenceSolution2D:
    """Grid values, row index = y, with the lower-side values stored on the
    doubled interface column and the upper-side column kept alongside."""

    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray
    gamma_index: int
    upper_column: np.ndarray
    resolution: int
    problem_name: str

    def side_values(self, side: str = "lower") -> np.ndarray:
        out = self.values.copy()
        if side == "upper":
            out[:, self.gamma_index] = self.upper_column
        return out

    def restrict(self, n_coarse: int) -> "ReferenceSolution2D":
        stride, rem = divmod(self.resolution, n_coarse)
        if rem:
            raise ValueError(f"{n_coarse} does not divide {self.resolution}")
        q, r = divmod(self.gamma_index, stride)
        if r:
            raise InterfaceNotOnGrid("interface falls off the coarse grid")
        idx = np.arange(0, self.resolution + 1, stride)
        return ReferenceSolution2D(
            xs=self.xs[idx],
            ys=self.ys[idx],
            values=self.values[np.ix_(idx, idx)],
            gamma_index=q,
            upper_column=self.upper_column[idx],
            resolution=n_coarse,
            problem_name=self.problem_name,
        )


def _vertical_interface_index(problem, nodes: np.ndarray) -> int:
    n = len(nodes) - 1
    segs = problem.interface
    if len(segs) != 1:
        raise InterfaceNotOnGrid("2D reference expects exactly one segment")
    seg = segs[0]
    if seg.axis != 0 or seg.lo > 1e-12 or seg.hi < 1.0 - 1e-12:
        raise InterfaceNotOnGrid("2D reference expects a full-height vertical segment")
    g = int(np.argmin(np.abs(nodes - seg.value)))
    if abs(nodes[g] - seg.value) > 1e-9:
        raise InterfaceNotOnGrid(f"interface {seg.value} not on the reference grid")
    if g < 3 or g > n - 3:
        raise InterfaceNotOnGrid("interface too close to the boundary")
    return g


def _banded_interface_matrix(a_nodes, c_nodes, h, g):
    """Banded (l=3, u=2) matrix of the 1D interface operator with node
    coefficients a, c on the doubled-unknown layout, flux factors 1.

    Unknown order: u_1 .. u_{g-1}, u_g minus side, u_g plus side,
    u_{g+1} .. u_{n-1}.  Returns (band, pde_unknown_ids, pde_node_ids,
    value_row, flux_row).
    """
    n = len(a_nodes) - 1
    nun = n  # (n - 1) interior nodes plus the doubled one
    ab = np.zeros((6, nun))  # 2 upper diagonals, main, 3 lower

    def uid(i):
        return i - 1 if i <= g else i

    def set_entry(r, c, v):
        ab[2 + r - c, c] += v

    pde_unknowns, pde_nodes = [], []
    for i in range(1, n):
        if i == g:
            continue
        r = uid(i)
        a, c = a_nodes[i], c_nodes[i]
        set_entry(r, r, 2.0 * a / h**2 + c)
        if i - 1 >= 1:
            left = g if i - 1 == g else uid(i - 1)  # plus-side unknown at g
            set_entry(r, left, -a / h**2)
        if i + 1 <= n - 1:
            right = g - 1 if i + 1 == g else uid(i + 1)  # minus-side unknown
            set_entry(r, right, -a / h**2)
        pde_unknowns.append(r)
        pde_nodes.append(i)

    rv, rf = g - 1, g
    set_entry(rv, g, 1.0)
    set_entry(rv, g - 1, -1.0)
    set_entry(rf, g, -3.0 / (2 * h))
    set_entry(rf, uid(g + 1), 4.0 / (2 * h))
    set_entry(rf, uid(g + 2), -1.0 / (2 * h))
    set_entry(rf, g - 1, -3.0 / (2 * h))
    set_entry(rf, uid(g - 1), 4.0 / (2 * h))
    set_entry(rf, uid(g - 2), -1.0 / (2 * h))
    return ab, np.array(pde_unknowns), np.array(pde_nodes), rv, rf


class _Operator2D:
    """2D interface system with a sparse route and a sine-transform route."""

    def __init__(self, problem, n: int, force_sparse: bool = False):
        self.problem = problem
        self.n = n
        self.nodes = np.linspace(0.0, 1.0, n + 1)
        self.g = _vertical_interface_index(problem, self.nodes)
        self.h = 1.0 / n
        if problem.weighted_flux:
            raise NotImplementedError(
                "2D reference implements the plain flux-jump convention"
            )
        y_independent = problem.a.axis == 0 and problem.b.axis == 0
        self.fast = y_independent and not force_sparse
        if self.fast:
            self._init_fast()
        else:
            self._init_sparse()

    # -- fast (sine transform) route --------------------------------------

    def _init_fast(self):
        n, g, h = self.n, self.g, self.h
        nodes = self.nodes
        # values at the interface column are never used: no PDE rows there
        a_nodes = np.array([self.problem.a_value((x, 0.5)) for x in nodes])
        b_nodes = np.array([self.problem.b_value((x, 0.5)) for x in nodes])
        k = np.arange(1, n)
        self.lam = (2.0 - 2.0 * np.cos(k * np.pi / n)) / h**2
        self._mats = [
            _banded_interface_matrix(a_nodes, b_nodes + a_nodes * lam_k, h, g)[0]
            for lam_k in self.lam
        ]
        _, self.pde_unknowns, self.pde_nodes, self.rv, self.rf = (
            _banded_interface_matrix(a_nodes, b_nodes, h, g)
        )
        self.a_nodes = a_nodes
        self.n_unknowns = n

    def _rhs_interior(self, fields) -> np.ndarray:
        """Interior source values plus boundary lifts, shape
        (interior x, interior y, n_samples)."""
        n, h = self.n, self.h
        nodes = self.nodes
        problem = self.problem
        R = np.stack(
            [_field_on_grid(f, nodes, nodes)[1:-1, 1:-1].T for f in fields],
            axis=-1,
        )
        # bottom and top rows lift the Dirichlet data into the rhs
        for col, j_node in ((0, 0), (n - 2, n)):
            ylift = nodes[j_node]
            gb = np.array(
                [problem.boundary_value((x, ylift)) for x in nodes[1:-1]]
            )
            R[:, col, :] += (gb * self.a_nodes[1:-1] / h**2)[:, None]
        # left and right columns; the factor is a at the PDE node
        for i_node, i_row in ((0, 1), (n, n - 1)):
            gb = np.array(
                [problem.boundary_value((nodes[i_node], y)) for y in nodes[1:-1]]
            )
            R[i_row - 1, :, :] += (gb * self.a_nodes[i_row] / h**2)[None, :].T
        return R

    def _solve_fast_batch(self, fields) -> np.ndarray:
        """Unknown grids (n_unknowns, interior y, n_samples): rows follow
        the per-mode 1D layout, columns the interior y nodes."""
        n, g = self.n, self.g
        nodes = self.nodes
        problem = self.problem
        R = self._rhs_interior(fields)
        R_hat = scipy.fft.dst(R, type=1, axis=1)
        ones_hat = scipy.fft.dst(np.ones(n - 1), type=1)
        mid = (float(nodes[g]), 0.5)
        gd = problem.jump_value(mid)
        gn = problem.jump_flux(mid)

        n_samples = R.shape[-1]
        U_hat = np.zeros((self.n_unknowns, n - 1, n_samples))
        rhs = np.zeros((self.n_unknowns, n_samples))
        for kk in range(n - 1):
            rhs[:] = 0.0
            rhs[self.pde_unknowns, :] = R_hat[self.pde_nodes - 1, kk, :]
            rhs[self.rv, :] = gd * ones_hat[kk]
            rhs[self.rf, :] = gn * ones_hat[kk]
            U_hat[:, kk, :] = solve_banded((3, 2), self._mats[kk], rhs)
        return scipy.fft.idst(U_hat, type=1, axis=1)

    # -- sparse route ------------------------------------------------------

    def _init_sparse(self):
        n, g, h = self.n, self.g, self.h
        nodes = self.nodes
        problem = self.problem
        id_lower = np.full((n + 1, n + 1), -1, dtype=int)
        id_upper = np.full((n + 1, n + 1), -1, dtype=int)
        nid = 0
        for j in range(1, n):
            for i in range(1, n):
                id_lower[i, j] = nid
                nid += 1
                if i == g:
                    id_upper[i, j] = nid
                    nid += 1
                else:
                    id_upper[i, j] = id_lower[i, j]
        self.id_lower, self.id_upper, self.n_sparse_unknowns = id_lower, id_upper, nid

        rows, cols, vals = [], [], []
        lift_rows, lift_pts, lift_facs = [], [], []
        pde_rows, pde_pts = [], []

        def add(r, c, v):
            rows.append(r)
            cols.append(c)
            vals.append(v)

        for j in range(1, n):
            for i in range(1, n):
                if i == g:
                    continue
                x, y = float(nodes[i]), float(nodes[j])
                a = problem.a_value((x, y))
                b = problem.b_value((x, y))
                r = id_lower[i, j]
                pde_rows.append(r)
                pde_pts.append((i, j))
                add(r, r, 4.0 * a / h**2 + b)
                for (ii, jj) in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
                    if ii == 0 or ii == n or jj == 0 or jj == n:
                        lift_rows.append(r)
                        lift_pts.append((float(nodes[ii]), float(nodes[jj])))
                        lift_facs.append(a / h**2)
                    elif ii == i - 1:
                        add(r, id_upper[ii, jj], -a / h**2)
                    else:
                        add(r, id_lower[ii, jj], -a / h**2)

        jump_value_rows, jump_flux_rows, jump_js = [], [], []
        for j in range(1, n):
            rv = id_lower[g, j]
            rf = id_upper[g, j]
            add(rv, id_upper[g, j], 1.0)
            add(rv, id_lower[g, j], -1.0)
            add(rf, id_upper[g, j], -3.0 / (2 * h))
            add(rf, id_lower[g + 1, j], 4.0 / (2 * h))
            add(rf, id_lower[g + 2, j], -1.0 / (2 * h))
            add(rf, id_lower[g, j], -3.0 / (2 * h))
            add(rf, id_upper[g - 1, j], 4.0 / (2 * h))
            add(rf, id_upper[g - 2, j], -1.0 / (2 * h))
            jump_value_rows.append(rv)
            jump_flux_rows.append(rf)
            jump_js.append(j)

        self._pde_rows = np.array(pde_rows)
        self._pde_pts = pde_pts
        self._lift_rows = np.array(lift_rows)
        self._lift_vals = np.array(
            [fac * problem.boundary_value(pt) for pt, fac in zip(lift_pts, lift_facs)]
        )
        self._jump_value_rows = np.array(jump_value_rows)
        self._jump_flux_rows = np.array(jump_flux_rows)
        self._jump_js = jump_js
        A = csc_matrix(
            (vals, (rows, cols)), shape=(self.n_sparse_unknowns, self.n_sparse_unknowns)
        )
        try:
            self._lu = splu(A)
        except RuntimeError as err:
            raise SingularSystem(f"reference system factorization failed: {err}")

    def _solve_sparse_batch(self, fields) -> np.ndarray:
        n, g = self.n, self.g
        nodes = self.nodes
        problem = self.problem
        n_samples = len(fields)
        rhs = np.zeros((self.n_sparse_unknowns, n_samples))
        for k, f in enumerate(fields):
            F = _field_on_grid(f, nodes, nodes)
            col = rhs[:, k]
            for r, (i, j) in zip(self._pde_rows, self._pde_pts):
                col[r] = F[j, i]
            np.add.at(col, self._lift_rows, self._lift_vals)
            for rv, rf, j in zip(
                self._jump_value_rows, self._jump_flux_rows, self._jump_js
            ):
                pt = (float(nodes[g]), float(nodes[j]))
                col[rv] = problem.jump_value(pt)
                col[rf] = problem.jump_flux(pt)
        u = self._lu.solve(rhs)
        if u.ndim == 1:
            u = u[:, None]
        # repack into the layout used by the fast route
        out = np.empty((n, n - 1, n_samples))
        for j in range(1, n):
            for i in range(1, n):
                r = i - 1 if i <= g else i
                out[r, j - 1, :] = u[self.id_lower[i, j], :]
                if i == g:
                    out[g, j - 1, :] = u[self.id_upper[i, j], :]
        return out

    # -- public ------------------------------------------------------------

    def solve_batch(self, fields) -> list[ReferenceSolution2D]:
        n = self.n
        per_chunk = max(1, _CHUNK_BYTES // (8 * (n - 1) ** 2))
        fields = list(fields)
        sols = []
        for start in range(0, len(fields), per_chunk):
            chunk = fields[start : start + per_chunk]
            U = (
                self._solve_fast_batch(chunk)
                if self.fast
                else self._solve_sparse_batch(chunk)
            )
            if not np.all(np.isfinite(U)):
                raise SingularSystem("reference solve produced non-finite values")
            for k in range(U.shape[-1]):
                sols.append(self._pack(U[:, :, k]))
        return sols

    def solve(self, f) -> ReferenceSolution2D:
        return self.solve_batch([f])[0]

    def _pack(self, U: np.ndarray) -> ReferenceSolution2D:
        n, g = self.n, self.g
        nodes = self.nodes
        problem = self.problem
        values = np.zeros((n + 1, n + 1))
        for j_node in (0, n):
            values[j_node, :] = [
                problem.boundary_value((x, nodes[j_node])) for x in nodes
            ]
        for i_node in (0, n):
            values[1:-1, i_node] = [
                problem.boundary_value((nodes[i_node], y)) for y in nodes[1:-1]
            ]
        for i in range(1, n):
            r = i - 1 if i <= g else i
            values[1:-1, i] = U[r, :]
        upper = np.empty(n + 1)
        upper[1:-1] = U[g, :]
        upper[0] = problem.boundary_value((nodes[g], nodes[0]), side="upper")
        upper[-1] = problem.boundary_value((nodes[g], nodes[-1]), side="upper")
        # the stored column keeps the lower-side limit at the two corners
        values[0, g] = problem.boundary_value((nodes[g], nodes[0]), side="lower")
        values[-1, g] = problem.boundary_value((nodes[g], nodes[-1]), side="lower")
        return ReferenceSolution2D(
            xs=nodes,
            ys=nodes,
            values=values,
            gamma_index=g,
            upper_column=upper,
            resolution=n,
            problem_name=problem.name,
        )


# ---------------------------------------------------------------------------
# entry points with operator reuse


_CACHE: dict = {}


def clear_reference_cache() -> None:
    _CACHE.clear()


def reference_operator(problem, n: int, force_sparse: bool = False):
    key = (problem.name, problem.dimension, n, problem.weighted_flux, force_sparse)
    op = _CACHE.get(key)
    if op is None or op.problem is not problem:
        op = (
            _Operator1D(problem, n)
            if problem.dimension == 1
            else _Operator2D(problem, n, force_sparse)
        )
        _CACHE[key] = op
    return op


def solve_reference(problem, f, resolution: int | None = None):
    """Reference solution at the requested resolution, escalated when the
    layer demands it."""
    n = pick_resolution(problem, resolution)
    return reference_operator(problem, n).solve(f)


def solve_reference_batch(problem, fields, resolution: int | None = None) -> list:
    n = pick_resolution(problem, resolution)
    return reference_operator(problem, n).solve_batch(fields)


# ---------------------------------------------------------------------------
# least-squares oracle


class OracleSolver:
    """Exact minimizer of the collocation loss, factored once per system.

    Rows are scaled by the square roots of the loss weights and columns by
    their largest magnitude before the orthogonal factorization; a small
    ridge fallback handles near rank deficiency, and genuine rank loss
    raises RankDeficient.
    """

    def __init__(self, system: ResidualSystem):
        self.system = system
        sw = np.sqrt(system.row_weights)
        A = sw[:, None] * system.J
        col = np.max(np.abs(A), axis=0)
        if np.any(col == 0):
            raise RankDeficient("a basis column vanishes at every collocation point")
        self._col = col
        self._sw = sw
        As = A / col
        self._q, self._r = np.linalg.qr(As)
        diag = np.abs(np.diag(self._r))
        self._use_ridge = diag.min() < 1e-10 * diag.max()
        if self._use_ridge:
            H = As.T @ As + _RIDGE * np.eye(As.shape[1])
            try:
                self._chol = np.linalg.cholesky(H)
            except np.linalg.LinAlgError:
                raise RankDeficient(
                    "collocation system rank-deficient beyond ridge repair"
                )
            self._As = As

    def solve_rhs(self, rhs: np.ndarray) -> np.ndarray:
        b = self._sw * rhs
        if self._use_ridge:
            y = self._As.T @ b
            z = solve_triangular(self._chol, y, lower=True)
            c = solve_triangular(self._chol.T, z, lower=False)
        else:
            c = solve_triangular(self._r, self._q.T @ b, lower=False)
        return c / self._col

    def solve(self, f) -> np.ndarray:
        return self.solve_rhs(self.system.rhs(f))


def fit_oracle_coefficients(problem, mesh: Mesh, f, system: ResidualSystem | None = None):
    """Least-squares coefficients for one source sample.

    Builds the residual system on the fly when one is not supplied;
    drivers that loop over samples should build the system once and pass
    it in.
    """
    if system is None:
        system = ResidualSystem(SolutionSpace(problem, mesh))
    return OracleSolver(system).solve(f)
