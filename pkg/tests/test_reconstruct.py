"""Piecewise reconstruction from coefficient vectors.

Includes an exactly solvable interface case: zero source, zero reaction,
unit diffusion, jump [u] = 1 with continuous slope.  The solution is -x on
the left branch and 1 - x on the right, which the two-cell linear span
contains exactly.
"""

import numpy as np
import pytest

from tfplearn.errors import ShapeMismatch
from tfplearn.geometry import build_mesh
from tfplearn.grf import FieldSampler, GrfSpec
from tfplearn.loss import ResidualSystem
from tfplearn.problems import benchmark, constant, piecewise_constant
from tfplearn.reconstruct import (
    PiecewiseSolution,
    SolutionSpace,
    jump_at,
    local_ode_residual,
)
from tfplearn.reference import OracleSolver

import dataclasses


def _linear_jump_problem():
    base = benchmark("1d-smooth")
    return dataclasses.replace(
        base,
        name="linear-jump",
        a=piecewise_constant((0.0, 1.0), (0.5,), (1.0, 1.0)),
        b=piecewise_constant((0.0, 1.0), (0.5,), (0.0, 0.0)),
        jump_value=lambda x: 1.0,
        jump_flux=lambda x: 0.0,
        boundary_data=lambda x: 0.0,
    )


def _zero(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def test_space_shapes():
    p = benchmark("1d-smooth")
    mesh = build_mesh(p.domain, 32, p.interface)
    space = SolutionSpace(p, mesh)
    assert space.n_basis == 2
    assert space.n_coeffs == 64

    q = benchmark("2d-interface")
    mesh2 = build_mesh(q.domain, (16, 16), q.interface)
    space2 = SolutionSpace(q, mesh2)
    assert space2.n_basis == 4
    assert space2.n_coeffs == 1024


def test_coefficient_shape_checking():
    p = benchmark("1d-smooth")
    space = SolutionSpace(p, build_mesh(p.domain, 4, p.interface))
    flat = np.zeros(8)
    sol = space.solution(flat, _zero)
    assert sol.coeffs.shape == (4, 2)
    with pytest.raises(ShapeMismatch):
        space.solution(np.zeros(7), _zero)


def test_exact_linear_interface_solution():
    p = _linear_jump_problem()
    mesh = build_mesh(p.domain, 2, p.interface)
    space = SolutionSpace(p, mesh)
    system = ResidualSystem(space)
    solver = OracleSolver(system)
    coeffs = solver.solve(_zero)
    assert float(system.total_loss(coeffs, system.rhs(_zero))) < 1e-20

    sol = space.solution(coeffs, _zero)
    xs_l = np.linspace(0.0, 0.5, 6)
    xs_r = np.linspace(0.5, 1.0, 6)
    assert np.allclose(sol.evaluate(xs_l, side="lower"), -xs_l, atol=1e-12)
    assert np.allclose(sol.evaluate(xs_r, side="upper"), 1.0 - xs_r, atol=1e-12)
    # derivative is -1 on both branches
    assert np.allclose(sol.evaluate(xs_l[1:-1], deriv=1), -1.0, atol=1e-12)


def test_side_convention_at_interface():
    p = _linear_jump_problem()
    mesh = build_mesh(p.domain, 2, p.interface)
    space = SolutionSpace(p, mesh)
    system = ResidualSystem(space)
    coeffs = OracleSolver(system).solve(_zero)
    sol = space.solution(coeffs, _zero)
    assert sol.evaluate(0.5, side="lower") == pytest.approx(-0.5, abs=1e-12)
    assert sol.evaluate(0.5, side="upper") == pytest.approx(0.5, abs=1e-12)
    # default is the lower side
    assert sol.evaluate(0.5) == pytest.approx(-0.5, abs=1e-12)


def test_jump_at_reports_value_and_slope():
    p = _linear_jump_problem()
    mesh = build_mesh(p.domain, 2, p.interface)
    space = SolutionSpace(p, mesh)
    coeffs = OracleSolver(
        ResidualSystem(space)
    ).solve(_zero)
    sol = space.solution(coeffs, _zero)
    j = jump_at(sol, 0.5)
    assert j.value == pytest.approx(1.0, abs=1e-12)
    assert j.slope == pytest.approx(0.0, abs=1e-12)
    assert j.weighted_slope == pytest.approx(0.0, abs=1e-12)


def test_local_ode_residual_vanishes_1d():
    """Any coefficient vector satisfies the frozen cell equation."""
    p = benchmark("1d-singular")
    mesh = build_mesh(p.domain, 16, p.interface)
    space = SolutionSpace(p, mesh)
    sensors = mesh.cell_centers()
    sampler = FieldSampler(GrfSpec(sensors=sensors, length_scale=0.2, jitter=1e-10))
    rng = np.random.default_rng(77)
    for _ in range(3):
        f = sampler.interpolant(sampler.sample(rng, 1)[0])
        coeffs = rng.normal(size=space.n_coeffs)
        sol = space.solution(coeffs, f)
        for k in (0, 7, 8, 15):
            lo, hi = mesh.cell_bounds(k)
            xs = lo + (hi - lo) * np.array([0.2, 0.5, 0.8])
            r = local_ode_residual(sol, k, xs)
            assert np.max(np.abs(r)) < 1e-8


def test_local_ode_residual_vanishes_2d():
    p = benchmark("2d-singular")
    mesh = build_mesh(p.domain, (8, 8), p.interface)
    space = SolutionSpace(p, mesh)
    sensors = mesh.cell_centers()
    sampler = FieldSampler(GrfSpec(sensors=sensors, length_scale=0.25, jitter=1e-10))
    rng = np.random.default_rng(3)
    f = sampler.interpolant(sampler.sample(rng, 1)[0])
    coeffs = rng.normal(size=space.n_coeffs)
    sol = space.solution(coeffs, f)
    for k in (0, 31, 63):
        (xl, xr), (yb, yt) = mesh.cell_bounds(k)
        pts = np.array(
            [
                [xl + 0.3 * (xr - xl), yb + 0.4 * (yt - yb)],
                [xl + 0.7 * (xr - xl), yb + 0.6 * (yt - yb)],
            ]
        )
        r = local_ode_residual(sol, k, pts)
        assert np.max(np.abs(r)) < 1e-8


def test_2d_evaluation_and_gradient():
    p = benchmark("2d-interface")
    mesh = build_mesh(p.domain, (4, 4), p.interface)
    space = SolutionSpace(p, mesh)
    rng = np.random.default_rng(12)
    coeffs = rng.normal(size=space.n_coeffs)
    sol = space.solution(coeffs, lambda pts: np.zeros(np.shape(pts)[0]))
    pts = np.array([[0.1, 0.2], [0.9, 0.9], [0.3, 0.55]])
    vals = sol.evaluate(pts)
    assert vals.shape == (3,)
    grad = sol.gradient(pts)
    assert grad.shape == (3, 2)
    # gradient against finite differences
    h = 1e-7
    for axis in range(2):
        dp = pts.copy()
        dm = pts.copy()
        dp[:, axis] += h
        dm[:, axis] -= h
        fd = (sol.evaluate(dp) - sol.evaluate(dm)) / (2.0 * h)
        assert np.max(np.abs(grad[:, axis] - fd)) < 1e-5


def test_2d_interface_sides():
    p = benchmark("2d-interface")
    mesh = build_mesh(p.domain, (4, 4), p.interface)
    space = SolutionSpace(p, mesh)
    rng = np.random.default_rng(9)
    coeffs = rng.normal(size=space.n_coeffs)
    sol = space.solution(coeffs, lambda pts: np.zeros(np.shape(pts)[0]))
    pt = np.array([0.5, 0.3])
    lo = sol.evaluate(pt, side="lower")
    hi = sol.evaluate(pt, side="upper")
    assert lo != hi  # random coefficients jump across the interface
    j = jump_at(sol, pt, normal=(1.0, 0.0))
    assert j.value == pytest.approx(hi - lo, rel=1e-12)
