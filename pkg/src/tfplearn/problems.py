"""Benchmark interface problems and the diffusion-removing coordinate map.

The continuous problem is -div(a grad u) + b u = f on the domain minus an
interface, with prescribed value and flux jumps across the interface and
Dirichlet data on the outer boundary.  Coefficients are piecewise smooth
with one-sided limits at the interface.

Two routes reduce this to cells with a frozen operator -a0 u'' + c u = F:
the 1D coordinate transform y(x) = int_0^x 1/a (``transform_coordinates``),
and the folded route that keeps x-coordinates and treats the per-branch
constant a as the cell diffusion a0.  All built-in benchmarks have constant
a per branch, so the pipeline uses the folded route; the transform is
exposed for analysis and tests.
"""

from __future__ import annotations

import bisect
import dataclasses
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import NonPositiveCoefficient, UnknownBenchmark
from .geometry import InterfaceSegment

_SEAM_TOL = 1e-12


@dataclass(frozen=True)
class PiecewiseFunction:
    """Scalar function defined by smooth branches between breakpoints.

    ``branches[k]`` covers the open interval between ``breakpoints[k-1]``
    and ``breakpoints[k]`` (with the domain endpoints closing the first and
    last branch).  At a breakpoint both one-sided limits exist; ``side``
    selects which branch evaluates ("lower" = left limit, default).
    ``constants[k]`` holds the branch value when the branch is constant,
    else None; several fast paths key off it.
    """

    domain: tuple[float, float]
    breakpoints: tuple[float, ...]
    branches: tuple[Callable[[float], float], ...]
    constants: tuple[float | None, ...] | None = None

    def __post_init__(self):
        if len(self.branches) != len(self.breakpoints) + 1:
            raise ValueError("need exactly one branch more than breakpoints")
        if self.constants is not None and len(self.constants) != len(self.branches):
            raise ValueError("constants must align with branches")

    def branch_index(self, x: float, side: str = "lower") -> int:
        for k, bp in enumerate(self.breakpoints):
            if abs(x - bp) <= _SEAM_TOL:
                return k if side == "lower" else k + 1
        return bisect.bisect_left(list(self.breakpoints), x)

    def value(self, x: float, side: str = "lower") -> float:
        k = self.branch_index(float(x), side)
        const = None if self.constants is None else self.constants[k]
        if const is not None:
            return float(const)
        return float(self.branches[k](float(x)))

    def values(self, xs, side: str = "lower") -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        return np.array([self.value(x, side) for x in xs.ravel()]).reshape(xs.shape)

    def branch_constant(self, k: int) -> float | None:
        if self.constants is None:
            return None
        return self.constants[k]

    def segment_bounds(self, k: int) -> tuple[float, float]:
        lo = self.domain[0] if k == 0 else self.breakpoints[k - 1]
        hi = self.domain[1] if k == len(self.branches) - 1 else self.breakpoints[k]
        return float(lo), float(hi)


def piecewise_constant(domain, breakpoints, values) -> PiecewiseFunction:
    vals = tuple(float(v) for v in values)
    return PiecewiseFunction(
        domain=tuple(domain),
        breakpoints=tuple(float(b) for b in breakpoints),
        branches=tuple((lambda x, v=v: v) for v in vals),
        constants=vals,
    )


@dataclass(frozen=True)
class PiecewiseFunction2D:
    """Piecewise function on the unit square split along one axis."""

    axis: int
    breakpoints: tuple[float, ...]
    branches: tuple[Callable[[float, float], float], ...]
    constants: tuple[float | None, ...] | None = None

    def branch_index(self, point, side: str = "lower") -> int:
        v = float(point[self.axis])
        for k, bp in enumerate(self.breakpoints):
            if abs(v - bp) <= _SEAM_TOL:
                return k if side == "lower" else k + 1
        return bisect.bisect_left(list(self.breakpoints), v)

    def value(self, point, side: str = "lower") -> float:
        k = self.branch_index(point, side)
        const = None if self.constants is None else self.constants[k]
        if const is not None:
            return float(const)
        return float(self.branches[k](float(point[0]), float(point[1])))


@dataclass(frozen=True)
class ProblemSpec:
    """An interface problem: coefficients, jump data, boundary data.

    The source f is not part of the spec; it is supplied per sample.
    ``weighted_flux`` records the benchmark's literal flux-jump convention:
    False means the jump data constrains the plain normal derivative,
    True means the a-weighted flux (one-sided a on each branch).
    """

    name: str
    dimension: int
    domain: tuple
    interface: tuple
    a: PiecewiseFunction | PiecewiseFunction2D
    b: PiecewiseFunction | PiecewiseFunction2D
    jump_value: Callable
    jump_flux: Callable
    boundary_data: Callable
    weighted_flux: bool = False
    epsilon: float | None = None

    def interface_points_1d(self) -> tuple[float, ...]:
        return tuple(self.interface)

    def a_value(self, point, side: str = "lower") -> float:
        v = self.a.value(point, side)
        if v <= 0:
            raise NonPositiveCoefficient(f"a({point}) = {v} <= 0")
        return v

    def b_value(self, point, side: str = "lower") -> float:
        return self.b.value(point, side)

    def boundary_value(self, point, side: str = "lower") -> float:
        """Dirichlet data at a boundary point (1D scalar or 2D pair)."""
        if self.dimension == 1:
            return float(self.boundary_data(float(point)))
        bd = self.boundary_data
        if hasattr(bd, "value"):
            return float(bd.value(point, side))
        return float(bd(float(point[0]), float(point[1])))

    def layer_width(self) -> float:
        """Smallest reaction-layer width sqrt(a/b) across branches.

        Used by the reference solver to decide how far to refine; smooth
        problems report an O(1) width and never trigger escalation.
        """
        widths = []
        for k in range(len(self.a.branches)):
            if self.dimension == 1:
                lo, hi = self.a.segment_bounds(k)
                xs = np.linspace(lo, hi, 33)[1:-1]
                a_min = min(self.a.value(x) for x in xs)
                b_max = max(self.b.value(x) for x in xs)
            else:
                lo = 0.0 if k == 0 else self.a.breakpoints[k - 1]
                hi = 1.0 if k == len(self.a.breakpoints) else self.a.breakpoints[k]
                ts = np.linspace(lo, hi, 17)[1:-1]
                pts = [(t, 0.5) if self.a.axis == 0 else (0.5, t) for t in ts]
                a_min = min(self.a.value(p) for p in pts)
                b_max = max(self.b.value(p) for p in pts)
            if b_max > 0:
                widths.append(float(np.sqrt(a_min / b_max)))

        return min(widths) if widths else float("inf")


# ---------------------------------------------------------------------------
# coordinate transform


def _branch_recip_integral(a: PiecewiseFunction, k: int, lo: float, hi: float) -> float:
    if hi <= lo:
        return 0.0
    const = a.branch_constant(k)
    if const is not None:
        if const <= 0:
            raise NonPositiveCoefficient(f"a = {const} <= 0 on branch {k}")
        return (hi - lo) / const
    fn = a.branches[k]
    probe = np.linspace(lo, hi, 65)
    vals = np.array([fn(float(x)) for x in probe])
    if np.any(vals <= 0):
        raise NonPositiveCoefficient("a must be strictly positive")
    val, _ = quad(lambda x: 1.0 / fn(x), lo, hi, epsabs=1e-13, epsrel=1e-13)
    return float(val)


def _cumulative_map(a: PiecewiseFunction) -> tuple[np.ndarray, np.ndarray]:
    """Breakpoint table (x nodes, y nodes) of the transform."""
    nodes = [a.domain[0], *a.breakpoints, a.domain[1]]
    ys = [0.0]
    for k in range(len(a.branches)):
        ys.append(ys[-1] + _branch_recip_integral(a, k, nodes[k], nodes[k + 1]))
    return np.asarray(nodes, dtype=float), np.asarray(ys, dtype=float)


def transform_coordinates(a: PiecewiseFunction, x: float) -> float:
    """y(x) = integral over [domain start, x] of 1/a."""
    x = float(x)
    nodes, ys = _cumulative_map(a)
    if x < nodes[0] - _SEAM_TOL or x > nodes[-1] + _SEAM_TOL:
        raise ValueError(f"x={x} outside domain {a.domain}")
    k = min(
        max(bisect.bisect_right(list(nodes), x) - 1, 0),
        len(a.branches) - 1,
    )
    return float(ys[k] + _branch_recip_integral(a, k, nodes[k], x))


def inverse_transform(a: PiecewiseFunction, y: float) -> float:
    """Monotone inverse of :func:`transform_coordinates` to 1e-12."""
    y = float(y)
    nodes, ys = _cumulative_map(a)
    if y < ys[0] - 1e-9 or y > ys[-1] + 1e-9:
        raise ValueError(f"y={y} outside transformed domain [0, {ys[-1]}]")
    y = min(max(y, ys[0]), ys[-1])
    k = min(max(bisect.bisect_right(ys.tolist(), y) - 1, 0), len(a.branches) - 1)
    const = a.branch_constant(k)
    if const is not None:
        return float(nodes[k] + const * (y - ys[k]))
    fn = lambda x: ys[k] + _branch_recip_integral(a, k, nodes[k], x) - y
    lo, hi = float(nodes[k]), float(nodes[k + 1])
    if fn(lo) >= 0:
        return lo
    if fn(hi) <= 0:
        return hi
    return float(brentq(fn, lo, hi, xtol=1e-13, rtol=1e-14))


@dataclass(frozen=True)
class TransformedProblem:
    """Transform-route view of a 1D problem: -u_yy + c(y) u = F(y)."""

    source_spec: ProblemSpec
    c: PiecewiseFunction
    domain_y: tuple[float, float]
    interfaces_y: tuple[float, ...]

    def x_of_y(self, y: float) -> float:
        return inverse_transform(self.source_spec.a, y)

    def y_of_x(self, x: float) -> float:
        return transform_coordinates(self.source_spec.a, x)

    def source_transform(self, f: Callable[[float], float]) -> Callable[[float], float]:
        """F(y) = a(x(y)) f(x(y))."""
        a = self.source_spec.a

        def F(y: float) -> float:
            x = self.x_of_y(y)
            return a.value(x) * f(x)

        return F


def effective_coefficients(spec: ProblemSpec) -> TransformedProblem:
    """c(y) = a b at the preimage, with interface locations mapped to y."""
    if spec.dimension != 1:
        raise ValueError("coordinate transform applies to 1D problems")
    a, b = spec.a, spec.b
    nodes, ys = _cumulative_map(a)
    y_breaks = []
    for bp in set(a.breakpoints) | set(b.breakpoints):
        y_breaks.append(transform_coordinates(a, bp))
    y_breaks = tuple(sorted(y_breaks))

    branches = tuple(
        (lambda y, kk=k: _sided_ab_product(spec, y, kk, y_breaks))
        for k in range(len(y_breaks) + 1)
    )
    c = PiecewiseFunction(
        domain=(0.0, float(ys[-1])),
        breakpoints=y_breaks,
        branches=branches,
    )
    ifaces = tuple(transform_coordinates(a, p) for p in spec.interface)
    return TransformedProblem(
        source_spec=spec,
        c=c,
        domain_y=(0.0, float(ys[-1])),
        interfaces_y=ifaces,
    )


def _sided_ab_product(spec: ProblemSpec, y: float, k: int, y_breaks) -> float:
    x = inverse_transform(spec.a, y)
    # pick the side that keeps evaluation inside branch k
    side = "lower"
    if k < len(y_breaks) and abs(y - y_breaks[k]) <= 1e-9:
        side = "lower"
    elif k > 0 and abs(y - y_breaks[k - 1]) <= 1e-9:
        side = "upper"
    return spec.a.value(x, side) * spec.b.value(x, side)


# ---------------------------------------------------------------------------
# benchmarks


def constant(v):
    """A callable returning ``v`` for any arguments."""
    return lambda *args: float(v)


_const = constant


def _pw1(breaks, branches, constants=None) -> PiecewiseFunction:
    return PiecewiseFunction(
        domain=(0.0, 1.0),
        breakpoints=tuple(breaks),
        branches=tuple(branches),
        constants=constants,
    )


def _make_1d(name, a_left, a_right, b_left, b_right, b_consts=None, eps=None):
    a = piecewise_constant((0.0, 1.0), (0.5,), (a_left, a_right))
    b = _pw1((0.5,), (b_left, b_right), b_consts)
    return ProblemSpec(
        name=name,
        dimension=1,
        domain=(0.0, 1.0),
        interface=(0.5,),
        a=a,
        b=b,
        jump_value=_const(1.0),
        jump_flux=_const(1.0),
        boundary_data=_const(0.0),
        weighted_flux=False,
        epsilon=eps,
    )


def _g_b_2d(x: float, y: float) -> float:
    # branch for the x >= 0.5 side; the x < 0.5 branch is the zero constant
    if abs(y) <= 1e-12 or abs(y - 1.0) <= 1e-12:
        return 2.0 * (1.0 - x)
    return 0.0


def _make_2d(name, a_const, eps=None):
    segment = InterfaceSegment(axis=0, value=0.5, lo=0.0, hi=1.0)
    a = PiecewiseFunction2D(
        axis=0,
        breakpoints=(0.5,),
        branches=(_const(a_const), _const(a_const)),
        constants=(float(a_const), float(a_const)),
    )
    b = PiecewiseFunction2D(
        axis=0,
        breakpoints=(0.5,),
        branches=(_const(16.0), _const(1.0)),
        constants=(16.0, 1.0),
    )
    g_b = PiecewiseFunction2D(
        axis=0,
        breakpoints=(0.5,),
        branches=(_const(0.0), _g_b_2d),
        constants=(0.0, None),
    )
    return ProblemSpec(
        name=name,
        dimension=2,
        domain=((0.0, 1.0), (0.0, 1.0)),
        interface=(segment,),
        a=a,
        b=b,
        jump_value=_const(1.0),
        jump_flux=_const(0.0),
        boundary_data=g_b,
        weighted_flux=False,
        epsilon=eps,
    )


def _bench_1d_smooth():
    return _make_1d(
        "1d-smooth",
        1.0,
        1.0,
        lambda x: 1.0 + np.exp(x),
        lambda x: 1.0 - np.log(x + 1.0),
    )


def _bench_1d_singular():
    return _make_1d(
        "1d-singular",
        0.001,
        0.001,
        _const(5.0),
        lambda x: 0.1 * (4.0 + 32.0 * x),
        b_consts=(5.0, None),
        eps=0.001,
    )


def _bench_1d_high_contrast():
    return _make_1d(
        "1d-high-contrast",
        0.001,
        1.0,
        lambda x: 2.0 * x + 1.0,
        lambda x: 2.0 * (1.0 - x) + 1.0,
    )


BENCHMARKS = {
    "1d-smooth": _bench_1d_smooth,
    "1d-singular": _bench_1d_singular,
    "1d-high-contrast": _bench_1d_high_contrast,
    "2d-interface": lambda: _make_2d("2d-interface", 1.0),
    "2d-singular": lambda: _make_2d("2d-singular", 0.001, eps=0.001),
}


def benchmark(name: str) -> ProblemSpec:
    """Benchmark problem by name; see BENCHMARKS for the registry."""
    try:
        factory = BENCHMARKS[name]
    except KeyError:
        raise UnknownBenchmark(
            f"unknown benchmark {name!r}; choose from {sorted(BENCHMARKS)}"
        ) from None
    return factory()


def singular_family(eps: float) -> ProblemSpec:
    """The 1d-singular benchmark with the diffusion constant replaced by eps.

    Used by the uniform-in-eps convergence study; eps = 0.001 reproduces
    the benchmark itself.
    """
    if eps <= 0:
        raise NonPositiveCoefficient(f"eps = {eps} must be positive")
    base = _bench_1d_singular()
    a = piecewise_constant((0.0, 1.0), (0.5,), (eps, eps))
    return dataclasses.replace(base, name=f"1d-singular[eps={eps:g}]", a=a, epsilon=eps)
