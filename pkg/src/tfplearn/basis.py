"""Cellwise tailored bases and particular solutions.

Each mesh cell carries a frozen local operator -a0 u'' + c_h(x) u with a0
constant and c_h the linear interpolant of the one-sided reaction values at
the cell endpoints (1D), or -a0 lap(u) + c0 u with both constants (2D).
The basis spans the homogeneous solutions exactly:

* c_h identically zero: span{1, x}, with the slope function rescaled only
  when the endpoint magnitude leaves [1/2, 2] so that coarse unit-square
  meshes keep the plain monomials.
* c_h a positive constant q: decaying exponentials anchored at the two
  endpoints, each with endpoint magnitude one.
* c_h genuinely linear: Airy functions of t(x) = c_h(x) (a0 p^2)^(-1/3),
  rescaled in log space so each function has endpoint magnitude one.
* 2D, c0 > 0: four one-directional exponentials anchored at the cell faces.
* 2D, c0 = 0: span{1, x, y, xy} about the cell center.

Particular solutions are exact up to quadrature: in 1D through the Green's
function of the frozen operator with homogeneous Dirichlet endpoint values
(so they never perturb value or boundary residuals), in 2D by freezing the
source at the cell center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import (
    DegenerateWronskian,
    NegativeCoefficient,
    NonPositiveCoefficient,
)
from .geometry import Mesh
from .special import airy_scaled, gauss_legendre

_CASE_TOL = 1e-13
_PANEL_ORDER = 24
_MAX_PANELS = 64


@dataclass(frozen=True)
class CellOperator1D:
    """Frozen operator data for one 1D cell: -a0 u'' + (q + p x) u."""

    index: int
    x_l: float
    x_r: float
    a0: float
    c_l: float
    c_r: float

    def __post_init__(self):
        if self.x_r <= self.x_l:
            raise ValueError(f"empty cell [{self.x_l}, {self.x_r}]")
        if self.a0 <= 0:
            raise NonPositiveCoefficient(f"a0 = {self.a0} <= 0 in cell {self.index}")
        if min(self.c_l, self.c_r) < 0:
            raise NegativeCoefficient(
                f"reaction endpoint values ({self.c_l}, {self.c_r}) "
                f"must be nonnegative in cell {self.index}"
            )

    @property
    def h(self) -> float:
        return self.x_r - self.x_l

    @property
    def p(self) -> float:
        return (self.c_r - self.c_l) / self.h

    @property
    def q(self) -> float:
        return self.c_l - self.p * self.x_l

    def c_h(self, x):
        return self.q + self.p * np.asarray(x, dtype=float)


@dataclass(frozen=True)
class CellOperator2D:
    """Frozen operator data for one 2D cell: -a0 lap(u) + c0 u."""

    index: int
    bounds: tuple[float, float, float, float]
    a0: float
    c0: float

    def __post_init__(self):
        x_l, x_r, y_b, y_t = self.bounds
        if x_r <= x_l or y_t <= y_b:
            raise ValueError(f"empty cell bounds {self.bounds}")
        if self.a0 <= 0:
            raise NonPositiveCoefficient(f"a0 = {self.a0} <= 0 in cell {self.index}")
        if self.c0 < 0:
            raise NegativeCoefficient(f"c0 = {self.c0} < 0 in cell {self.index}")


def fit_cell_coefficients(problem, mesh: Mesh):
    """Frozen per-cell operator data from a problem's coefficients.

    1D cells sample the reaction at both endpoints with the one-sided limit
    taken from inside the cell, so interface cells see their own branch.
    2D cells sample everything at the cell center.  The diffusion is frozen
    at the cell center in both cases; for the piecewise-constant benchmark
    diffusions this is exact.
    """
    ops = []
    if mesh.dimension == 1:
        for k in range(mesh.n_cells):
            x_l, x_r = mesh.cell_bounds(k)
            center = 0.5 * (x_l + x_r)
            a0 = problem.a_value(center)
            c_l = problem.b_value(x_l, side="upper")
            c_r = problem.b_value(x_r, side="lower")
            ops.append(
                CellOperator1D(index=k, x_l=x_l, x_r=x_r, a0=a0, c_l=c_l, c_r=c_r)
            )
        return ops
    for k in range(mesh.n_cells):
        (x_l, x_r), (y_b, y_t) = mesh.cell_bounds(k)
        center = (0.5 * (x_l + x_r), 0.5 * (y_b + y_t))
        a0 = problem.a_value(center)
        c0 = problem.b_value(center)
        ops.append(CellOperator2D(index=k, bounds=(x_l, x_r, y_b, y_t), a0=a0, c0=c0))
    return ops


# ---------------------------------------------------------------------------
# 1D basis


class CellBasis1D:
    """Two homogeneous solutions of the frozen cell operator, scaled O(1).

    Exposes values / first / second derivatives of the basis pair, the
    endpoint-vanishing Green's pair (phi_l, phi_r) with its constant
    Wronskian, and a composite Gauss rule resolving the sharpest decay
    scale of the cell.
    """

    def __init__(self, op: CellOperator1D):
        self.op = op
        c_max = max(op.c_l, op.c_r)
        scale = op.a0 / op.h**2
        if c_max <= _CASE_TOL * max(scale, 1.0):
            self.kind = "linear"
            x_max = max(abs(op.x_l), abs(op.x_r))
            if x_max == 0.0 or 0.5 <= x_max <= 2.0:
                self._s2 = 1.0
            else:
                self._s2 = 1.0 / x_max
        elif abs(op.c_r - op.c_l) <= _CASE_TOL * c_max:
            self.kind = "exponential"
            q = 0.5 * (op.c_l + op.c_r)
            self._kappa = math.sqrt(q / op.a0)
        else:
            self.kind = "airy"
            p = op.p
            self._t_slope = p * (op.a0 * p * p) ** (-1.0 / 3.0)
            t_l = op.c_l * (op.a0 * p * p) ** (-1.0 / 3.0)
            t_r = op.c_r * (op.a0 * p * p) ** (-1.0 / 3.0)
            self._t_ref = t_l
            la, lb = [], []
            for t in (t_l, t_r):
                ai, aip, bi, bip, log_ai, log_bi = airy_scaled(t)
                la.append(np.log(max(abs(ai), 1e-300)) + log_ai)
                lb.append(np.log(max(abs(bi), 1e-300)) + log_bi)
            self._log_scale_a = float(max(la))
            self._log_scale_b = float(max(lb))

    # -- basis values -----------------------------------------------------

    def _t(self, x):
        return self._t_ref + self._t_slope * (np.asarray(x, dtype=float) - self.op.x_l)

    def values(self, x) -> np.ndarray:
        """Basis pair at x; shape (..., 2)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "linear":
            return np.stack([np.ones_like(x), self._s2 * x], axis=-1)
        if self.kind == "exponential":
            k = self._kappa
            return np.stack(
                [np.exp(k * (x - self.op.x_r)), np.exp(-k * (x - self.op.x_l))],
                axis=-1,
            )
        t = self._t(x)
        ai, aip, bi, bip, log_ai, log_bi = airy_scaled(t)
        a1 = np.sign(ai) * np.exp(
            np.log(np.maximum(np.abs(ai), 1e-300)) + log_ai - self._log_scale_a
        )
        a2 = np.sign(bi) * np.exp(
            np.log(np.maximum(np.abs(bi), 1e-300)) + log_bi - self._log_scale_b
        )
        return np.stack([a1, a2], axis=-1)

    def derivs(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "linear":
            return np.stack([np.zeros_like(x), np.full_like(x, self._s2)], axis=-1)
        if self.kind == "exponential":
            k = self._kappa
            return np.stack(
                [
                    k * np.exp(k * (x - self.op.x_r)),
                    -k * np.exp(-k * (x - self.op.x_l)),
                ],
                axis=-1,
            )
        t = self._t(x)
        ai, aip, bi, bip, log_ai, log_bi = airy_scaled(t)
        da1 = self._t_slope * np.sign(aip) * np.exp(
            np.log(np.maximum(np.abs(aip), 1e-300)) + log_ai - self._log_scale_a
        )
        da2 = self._t_slope * np.sign(bip) * np.exp(
            np.log(np.maximum(np.abs(bip), 1e-300)) + log_bi - self._log_scale_b
        )
        return np.stack([da1, da2], axis=-1)

    def second(self, x) -> np.ndarray:
        """Second derivatives via the defining equation a0 u'' = c_h u."""
        x = np.asarray(x, dtype=float)
        return (self.op.c_h(x) / self.op.a0)[..., None] * self.values(x)

    # -- Green's pair -----------------------------------------------------

    @cached_property
    def _green_data(self):
        op = self.op
        vl = self.values(op.x_l)
        vr = self.values(op.x_r)
        a1l, a2l = float(vl[0]), float(vl[1])
        a1r, a2r = float(vr[0]), float(vr[1])
        if self.kind == "linear":
            w12 = self._s2
        elif self.kind == "exponential":
            w12 = -2.0 * self._kappa * math.exp(-self._kappa * op.h)
        else:
            w12 = (self._t_slope / math.pi) * math.exp(
                -self._log_scale_a - self._log_scale_b
            )
        det = a1l * a2r - a2l * a1r
        w_lr = det * w12
        scale = abs(a1l * a2r) + abs(a2l * a1r)
        if abs(det) <= 1e-13 * max(scale, 1e-30) or w_lr == 0.0:
            raise DegenerateWronskian(
                f"Green's pair Wronskian vanished in cell {op.index} "
                f"(det = {det:.3e}, scale = {scale:.3e})"
            )
        return a1l, a2l, a1r, a2r, w_lr

    def phi_left(self, x, deriv: int = 0) -> np.ndarray:
        """Homogeneous solution vanishing at the left endpoint."""
        a1l, a2l, _, _, _ = self._green_data
        tab = [self.values, self.derivs, self.second][deriv](x)
        return a2l * tab[..., 0] - a1l * tab[..., 1]

    def phi_right(self, x, deriv: int = 0) -> np.ndarray:
        """Homogeneous solution vanishing at the right endpoint."""
        _, _, a1r, a2r, _ = self._green_data
        tab = [self.values, self.derivs, self.second][deriv](x)
        return a2r * tab[..., 0] - a1r * tab[..., 1]

    @property
    def wronskian(self) -> float:
        """Constant Wronskian of (phi_left, phi_right)."""
        return self._green_data[4]

    def green(self, x, s) -> np.ndarray:
        """Green's function of the frozen operator with u(x_l)=u(x_r)=0."""
        x = np.asarray(x, dtype=float)
        s = np.asarray(s, dtype=float)
        lo = np.minimum(x, s)
        hi = np.maximum(x, s)
        return -self.phi_left(lo) * self.phi_right(hi) / (self.op.a0 * self.wronskian)

    # -- quadrature -------------------------------------------------------

    @cached_property
    def decay_rate(self) -> float:
        """Sharpest variation rate of the homogeneous pair on the cell."""
        return math.sqrt(max(self.op.c_l, self.op.c_r, 0.0) / self.op.a0)

    @cached_property
    def quad(self):
        """Composite Gauss nodes and weights resolving the decay scale."""
        op = self.op
        panels = int(np.clip(math.ceil(self.decay_rate * op.h / 8.0), 1, _MAX_PANELS))
        rule = gauss_legendre(_PANEL_ORDER)
        edges = np.linspace(op.x_l, op.x_r, panels + 1)
        nodes, weights = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            n, w = rule.mapped(a, b)
            nodes.append(n)
            weights.append(w)
        return np.concatenate(nodes), np.concatenate(weights)


def build_basis_1d(op: CellOperator1D) -> CellBasis1D:
    """Tailored basis for one 1D cell operator."""
    return CellBasis1D(op)


@dataclass(frozen=True)
class CellParticular1D:
    """Particular solution with u_p(x_l) = u_p(x_r) = 0.

    ``dp_left`` and ``dp_right`` are the endpoint slopes; they are linear
    in the source values at the cell quadrature nodes with the precomputed
    weights exposed by :func:`endpoint_slope_weights`.
    """

    basis: CellBasis1D
    source: Callable
    f_nodes: np.ndarray
    dp_left: float
    dp_right: float

    def value(self, x) -> np.ndarray:
        return _particular_eval(self.basis, self.source, x, deriv=0)

    def deriv(self, x) -> np.ndarray:
        return _particular_eval(self.basis, self.source, x, deriv=1)

    def second(self, x) -> np.ndarray:
        """From the equation: u_p'' = (c_h u_p - F) / a0."""
        x = np.asarray(x, dtype=float)
        op = self.basis.op
        f = np.asarray(self.source(x), dtype=float)
        return (op.c_h(x) * self.value(x) - f) / op.a0


def endpoint_slope_weights(basis: CellBasis1D) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature weights (w_l, w_r) with u_p'(x_l) = w_l . F and likewise
    on the right, F being source values at ``basis.quad`` nodes."""
    nodes, w = basis.quad
    op = basis.op
    denom = op.a0 * basis.wronskian
    dphil_l = float(basis.phi_left(op.x_l, deriv=1))
    dphir_r = float(basis.phi_right(op.x_r, deriv=1))
    w_l = -dphil_l * basis.phi_right(nodes) * w / denom
    w_r = -dphir_r * basis.phi_left(nodes) * w / denom
    return w_l, w_r


def particular_solution_1d(basis: CellBasis1D, source: Callable) -> CellParticular1D:
    """Particular solution for a source callable on the cell."""
    nodes, _ = basis.quad
    f_nodes = np.asarray(source(nodes), dtype=float)
    w_l, w_r = endpoint_slope_weights(basis)
    return CellParticular1D(
        basis=basis,
        source=source,
        f_nodes=f_nodes,
        dp_left=float(w_l @ f_nodes),
        dp_right=float(w_r @ f_nodes),
    )


def _particular_eval(basis: CellBasis1D, source, x, deriv: int) -> np.ndarray:
    """u_p or u_p' at arbitrary points via split Gauss integrals."""
    op = basis.op
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    rule = gauss_legendre(_PANEL_ORDER)
    denom = op.a0 * basis.wronskian
    out = np.empty_like(xs)
    panels = max(1, math.ceil(basis.decay_rate * op.h / 8.0))
    for i, xv in enumerate(xs):
        left = _panel_integral(basis, source, op.x_l, xv, rule, panels, "left")
        right = _panel_integral(basis, source, xv, op.x_r, rule, panels, "right")
        if deriv == 0:
            out[i] = -(basis.phi_right(xv) * left + basis.phi_left(xv) * right) / denom
        else:
            out[i] = (
                -(
                    basis.phi_right(xv, deriv=1) * left
                    + basis.phi_left(xv, deriv=1) * right
                )
                / denom
            )
    return out.reshape(np.shape(x)) if np.shape(x) else float(out[0])


def _panel_integral(basis, source, a, b, rule, panels, side) -> float:
    if b <= a:
        return 0.0
    total = 0.0
    edges = np.linspace(a, b, panels + 1)
    for lo, hi in zip(edges[:-1], edges[1:]):
        n, w = rule.mapped(lo, hi)
        phi = basis.phi_left(n) if side == "left" else basis.phi_right(n)
        total += float(np.sum(w * phi * np.asarray(source(n), dtype=float)))
    return total


# ---------------------------------------------------------------------------
# 2D basis


class CellBasis2D:
    """Four homogeneous solutions of -a0 lap(u) + c0 u on a 2D cell.

    For c0 > 0 these are one-directional exponentials anchored at the four
    cell faces, each with magnitude one on its face; for c0 = 0 the
    operator degenerates to the Laplacian and the basis falls back to the
    harmonic span {1, x, y, xy} about the cell center.
    """

    def __init__(self, op: CellOperator2D):
        self.op = op
        x_l, x_r, y_b, y_t = op.bounds
        self.center = (0.5 * (x_l + x_r), 0.5 * (y_b + y_t))
        self.degenerate = op.c0 == 0.0
        self.mu = 0.0 if self.degenerate else math.sqrt(op.c0 / op.a0)

    def values(self, points) -> np.ndarray:
        """Basis quadruple at points of shape (..., 2); result (..., 4)."""
        pts = np.asarray(points, dtype=float)
        x = pts[..., 0]
        y = pts[..., 1]
        x_l, x_r, y_b, y_t = self.op.bounds
        if self.degenerate:
            xc, yc = self.center
            return np.stack(
                [np.ones_like(x), x - xc, y - yc, (x - xc) * (y - yc)], axis=-1
            )
        m = self.mu
        return np.stack(
            [
                np.exp(m * (x - x_r)),
                np.exp(-m * (x - x_l)),
                np.exp(m * (y - y_t)),
                np.exp(-m * (y - y_b)),
            ],
            axis=-1,
        )

    def gradients(self, points) -> np.ndarray:
        """Gradients of the quadruple; result (..., 4, 2)."""
        pts = np.asarray(points, dtype=float)
        x = pts[..., 0]
        y = pts[..., 1]
        zeros = np.zeros_like(x)
        x_l, x_r, y_b, y_t = self.op.bounds
        if self.degenerate:
            xc, yc = self.center
            gx = np.stack([zeros, np.ones_like(x), zeros, y - yc], axis=-1)
            gy = np.stack([zeros, zeros, np.ones_like(x), x - xc], axis=-1)
            return np.stack([gx, gy], axis=-1)
        m = self.mu
        e1 = np.exp(m * (x - x_r))
        e2 = np.exp(-m * (x - x_l))
        e3 = np.exp(m * (y - y_t))
        e4 = np.exp(-m * (y - y_b))
        gx = np.stack([m * e1, -m * e2, zeros, zeros], axis=-1)
        gy = np.stack([zeros, zeros, m * e3, -m * e4], axis=-1)
        return np.stack([gx, gy], axis=-1)

    def particular_value(self, f_center: float):
        """Constant (or radial, when degenerate) particular solution."""
        op = self.op
        if not self.degenerate:
            const = f_center / op.c0

            def u_p(points):
                pts = np.asarray(points, dtype=float)
                return np.full(pts.shape[:-1], const)

            def grad_p(points):
                pts = np.asarray(points, dtype=float)
                return np.zeros(pts.shape[:-1] + (2,))

            return u_p, grad_p

        xc, yc = self.center
        coef = -f_center / (4.0 * op.a0)

        def u_p(points):
            pts = np.asarray(points, dtype=float)
            return coef * ((pts[..., 0] - xc) ** 2 + (pts[..., 1] - yc) ** 2)

        def grad_p(points):
            pts = np.asarray(points, dtype=float)
            g = np.stack([pts[..., 0] - xc, pts[..., 1] - yc], axis=-1)
            return 2.0 * coef * g

        return u_p, grad_p


def build_basis_2d(op: CellOperator2D) -> CellBasis2D:
    """Tailored basis for one 2D cell operator."""
    return CellBasis2D(op)
