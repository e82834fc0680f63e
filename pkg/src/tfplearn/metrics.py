"""Error metrics: relative grid errors, broken cell-wise norms, reports.

Relative errors are the plain displayed ratios over grid points.  Broken
norms integrate cell by cell so that jumps across cell boundaries cost
nothing; reconstructions supply analytic derivatives while reference
grids get finite-difference derivatives, one-sided at the interface.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InsufficientDerivatives,
    MeshMismatch,
    ShapeMismatch,
    ZeroReference,
)
from .geometry import Mesh
from .special import gauss_legendre


def relative_errors(pred, true) -> tuple[float, float]:
    """Relative L2 and Linf errors of one grid against a reference grid."""
    pred = np.asarray(pred, dtype=float).ravel()
    true = np.asarray(true, dtype=float).ravel()
    if pred.shape != true.shape:
        raise ShapeMismatch(f"grid shapes differ: {pred.shape} vs {true.shape}")
    denom2 = float(np.sqrt(np.sum(true**2)))
    denom_inf = float(np.max(np.abs(true)))
    if denom2 == 0.0 or denom_inf == 0.0:
        raise ZeroReference("reference grid is identically zero")
    l2 = float(np.sqrt(np.sum((pred - true) ** 2))) / denom2
    linf = float(np.max(np.abs(pred - true))) / denom_inf
    return l2, linf


@dataclass(frozen=True)
class ErrorReport:
    """Per-sample relative errors with aggregate statistics."""

    benchmark: str
    l2: np.ndarray
    linf: np.ndarray
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.l2) != len(self.linf):
            raise ShapeMismatch("per-sample metric arrays differ in length")
        if np.any(np.asarray(self.l2) < 0) or np.any(np.asarray(self.linf) < 0):
            raise ValueError("relative errors cannot be negative")

    @property
    def n_samples(self) -> int:
        return len(self.l2)

    def summary(self) -> dict:
        out = {"benchmark": self.benchmark, "n_samples": self.n_samples}
        for name, arr in (("rel_l2", self.l2), ("rel_linf", self.linf)):
            a = np.asarray(arr, dtype=float)
            out[name] = {
                "median": float(np.median(a)),
                "mean": float(np.mean(a)),
                "min": float(np.min(a)),
                "max": float(np.max(a)),
            }
        for key, value in self.extra.items():
            out[key] = value
        return out

    def csv_rows(self) -> list[tuple]:
        return [
            (self.benchmark, k, float(self.l2[k]), float(self.linf[k]))
            for k in range(self.n_samples)
        ]


def error_report(benchmark: str, preds, trues, extra: dict | None = None) -> ErrorReport:
    pairs = [relative_errors(p, t) for p, t in zip(preds, trues)]
    l2 = np.array([p[0] for p in pairs])
    linf = np.array([p[1] for p in pairs])
    return ErrorReport(benchmark=benchmark, l2=l2, linf=linf, extra=extra or {})


# ---------------------------------------------------------------------------
# broken norms


def broken_norm(cells, order: int, eps: float | None = None) -> float:
    """Cell-wise Sobolev-type norm of a piecewise function.

    ``cells`` iterates over (quadrature weights, derivative table) pairs,
    the table holding rows for derivative orders 0, 1, ... at the
    quadrature points.  The plain norm sums squared L2 norms of all
    derivatives up to ``order`` over all cells.  With ``eps`` given the
    result is sqrt(eps * (order-1 norm)^2 + (order-0 norm)^2), the energy
    scaling natural for a small diffusion coefficient; it needs first
    derivatives regardless of ``order``.
    """
    need = 1 if eps is not None else order
    total = np.zeros(need + 1)
    for weights, derivs in cells:
        weights = np.asarray(weights, dtype=float)
        derivs = np.asarray(derivs, dtype=float)
        if derivs.ndim == 1:
            derivs = derivs[None, :]
        if derivs.shape[0] < need + 1:
            raise InsufficientDerivatives(
                f"need derivatives up to order {need}, got {derivs.shape[0] - 1}"
            )
        for l in range(need + 1):
            total[l] += float(np.sum(weights * derivs[l] ** 2))
    if eps is not None:
        return float(np.sqrt(eps * (total[0] + total[1]) + total[0]))
    return float(np.sqrt(np.sum(total)))


def gauss_cell_quadrature(bounds: tuple[float, float], order: int = 12):
    """Plain Gauss rule on one cell, for callers sampling custom data."""
    rule = gauss_legendre(order)
    return rule.mapped(bounds[0], bounds[1])


def solution_cell_samples(solution, order: int = 2):
    """Per-cell quadrature samples of a reconstruction (1D).

    Uses the basis quadrature panels so that layer cells are integrated
    as carefully as the particular solutions were.
    """
    space = solution.space
    if space.problem.dimension != 1:
        raise MeshMismatch("broken-norm sampling is implemented for 1D meshes")
    if order > 2:
        raise InsufficientDerivatives("reconstructions carry derivatives up to 2")
    out = []
    for k, basis in enumerate(space.bases):
        nodes, weights = basis.quad
        out.append((weights, _solution_rows(solution, k, nodes, order)))
    return out


def _solution_rows(solution, cell: int, pts: np.ndarray, order: int) -> np.ndarray:
    basis = solution.space.bases[cell]
    c = solution.coeffs[cell]
    part = solution.particulars[cell]
    rows = [basis.values(pts) @ c + part.value(pts)]
    if order >= 1:
        rows.append(basis.derivs(pts) @ c + part.deriv(pts))
    if order >= 2:
        rows.append(basis.second(pts) @ c + part.second(pts))
    return np.vstack(rows)


# ---------------------------------------------------------------------------
# finite-difference derivatives on reference grids


def fd_weights(x0: float, xs, m: int) -> np.ndarray:
    """Finite-difference weights for the m-th derivative at x0 from
    arbitrary nodes xs (Fornberg's recurrence)."""
    xs = np.asarray(xs, dtype=float)
    n = len(xs)
    if m >= n:
        raise InsufficientDerivatives(f"{n} nodes cannot give derivative {m}")
    w = np.zeros((n, m + 1))
    w[0, 0] = 1.0
    c1 = 1.0
    for i in range(1, n):
        c2 = 1.0
        prev = w[i - 1].copy()
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            for k in range(min(i, m), -1, -1):
                w[j, k] = (
                    (xs[i] - x0) * w[j, k] - (k * w[j, k - 1] if k else 0.0)
                ) / c3
        for k in range(min(i, m), -1, -1):
            w[i, k] = (
                c1 * ((k * prev[k - 1] if k else 0.0) - (xs[i - 1] - x0) * prev[k]) / c2
            )
        c1 = c2
    return w[:, m]


def _segment_derivative(vals: np.ndarray, h: float, m: int) -> np.ndarray:
    """Fourth-order derivative estimate at every node of a uniform
    segment, one-sided near the ends."""
    n = len(vals)
    width = min(5 if m == 1 else 6, n)
    if width <= m:
        raise InsufficientDerivatives(
            f"segment of {n} nodes too short for derivative {m}"
        )
    out = np.empty(n)
    half = (width - 1) // 2
    offs = (np.arange(width) - half) * h
    w_mid = fd_weights(0.0, offs, m)
    lo, hi = half, n - (width - 1 - half)
    if hi > lo:
        windows = np.lib.stride_tricks.sliding_window_view(vals, width)
        out[lo:hi] = windows @ w_mid
    for i in range(min(lo, n)):
        out[i] = vals[:width] @ fd_weights(i * h, np.arange(width) * h, m)
    base = n - width
    for i in range(max(hi, 0), n):
        out[i] = vals[base:] @ fd_weights(i * h, (base + np.arange(width)) * h, m)
    return out


def reference_derivatives(ref, order: int = 2):
    """Derivative tables [d0, d1, ...] over the reference nodes, computed
    segment by segment so no stencil crosses the interface.

    Returns (tables, upper_at): the tables keep the lower-side limit at
    interface nodes; upper_at maps an interface node index to its
    upper-side derivative column.
    """
    nodes = ref.nodes
    n = len(nodes) - 1
    h = float(nodes[1] - nodes[0])
    cuts = [0, *ref.interface_indices, n]
    lower = ref.side_values("lower")
    upper = ref.side_values("upper")
    tables = [np.empty(n + 1) for _ in range(order + 1)]
    upper_at = {g: np.empty(order + 1) for g in ref.interface_indices}
    for s0, s1 in zip(cuts, cuts[1:]):
        vals = lower[s0 : s1 + 1].copy()
        from_interface = s0 in upper_at
        if from_interface:
            vals[0] = upper[s0]
        rows = [vals]
        for m in range(1, order + 1):
            rows.append(_segment_derivative(vals, h, m))
        start = s0 + 1 if from_interface else s0
        for m in range(order + 1):
            tables[m][start : s1 + 1] = rows[m][start - s0 :]
            if from_interface:
                upper_at[s0][m] = rows[m][0]
    return tables, upper_at


def _cell_node_range(mesh: Mesh, ref, cell: int) -> tuple[int, int]:
    x_l, x_r = mesh.cell_bounds(cell)
    n = ref.resolution
    i0 = int(round(x_l * n))
    i1 = int(round(x_r * n))
    if abs(ref.nodes[i0] - x_l) > 1e-9 or abs(ref.nodes[i1] - x_r) > 1e-9:
        raise MeshMismatch("mesh cell edges do not lie on the reference grid")
    return i0, i1


def _simpson_weights(n_pts: int, h: float) -> np.ndarray:
    """Composite Simpson weights on a uniform grid, with a trapezoid patch
    on the final interval when the point count is even."""
    if n_pts < 2:
        raise ValueError("need at least two points to integrate")
    w = np.zeros(n_pts)
    end = n_pts if n_pts % 2 == 1 else n_pts - 1
    if end >= 3:
        w[0] = 1.0
        w[end - 1] = 1.0
        w[1 : end - 1 : 2] = 4.0
        w[2 : end - 1 : 2] = 2.0
        w *= h / 3.0
    if end != n_pts:
        w[-2] += 0.5 * h
        w[-1] += 0.5 * h
    return w


def _reference_rows(tables, upper_at, i0: int, i1: int, order: int) -> np.ndarray:
    rows = []
    for m in range(order + 1):
        row = tables[m][i0 : i1 + 1].copy()
        # a cell starting at the interface sees the upper-side limits
        if i0 in upper_at:
            row[0] = upper_at[i0][m]
        rows.append(row)
    return np.vstack(rows)


def error_cell_samples(solution, ref, order: int = 2):
    """Per-cell Simpson samples of (reconstruction - reference) with
    derivatives up to ``order``, for broken-norm error evaluation."""
    space = solution.space
    if space.problem.dimension != 1:
        raise MeshMismatch("broken-norm errors are implemented for 1D meshes")
    tables, upper_at = reference_derivatives(ref, order)
    h = float(ref.nodes[1] - ref.nodes[0])
    cells = []
    for k in range(space.mesh.n_cells):
        i0, i1 = _cell_node_range(space.mesh, ref, k)
        pts = ref.nodes[i0 : i1 + 1]
        diff = _solution_rows(solution, k, pts, order) - _reference_rows(
            tables, upper_at, i0, i1, order
        )
        cells.append((_simpson_weights(len(pts), h), diff))
    return cells


def reference_cell_samples(ref, mesh: Mesh, order: int = 1):
    """Per-cell Simpson samples of the reference itself, e.g. for the
    denominator of a relative broken-norm error."""
    tables, upper_at = reference_derivatives(ref, order)
    h = float(ref.nodes[1] - ref.nodes[0])
    cells = []
    for k in range(mesh.n_cells):
        i0, i1 = _cell_node_range(mesh, ref, k)
        rows = _reference_rows(tables, upper_at, i0, i1, order)
        cells.append((_simpson_weights(i1 - i0 + 1, h), rows))
    return cells


def broken_error_norm(solution, ref, order: int = 2, eps: float | None = None) -> float:
    return broken_norm(error_cell_samples(solution, ref, order), order, eps)


def relative_epsilon_error(solution, ref, eps: float) -> float:
    """Relative eps-weighted broken error of a reconstruction."""
    num = broken_norm(error_cell_samples(solution, ref, 1), 1, eps)
    den = broken_norm(reference_cell_samples(ref, solution.space.mesh, 1), 1, eps)
    if den == 0.0:
        raise ZeroReference("reference has zero eps-norm")
    return num / den


def loglog_slope(xs, ys) -> float:
    """Least-squares slope of log(y) against log(x)."""
    xs = np.log(np.asarray(xs, dtype=float))
    ys = np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(xs, ys, 1)[0])
