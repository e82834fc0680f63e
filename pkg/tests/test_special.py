"""Airy evaluation and Gauss-Legendre quadrature.

The Airy checks are independent of the implementation route: closed forms
at the origin from Gamma-function identities, a Maclaurin series on a small
interval, the Wronskian identity, and a finite-difference check of the
defining equation y'' = t y.
"""

import math

import numpy as np
import pytest

from tfplearn.errors import ArgumentOutOfRange, UnsupportedOrder
from tfplearn.special import AiryValues, airy_eval, airy_scaled, gauss_legendre

AI0 = 3.0 ** (-2.0 / 3.0) / math.gamma(2.0 / 3.0)
AIP0 = -(3.0 ** (-1.0 / 3.0)) / math.gamma(1.0 / 3.0)
BI0 = 3.0 ** (-1.0 / 6.0) / math.gamma(2.0 / 3.0)
BIP0 = 3.0 ** (1.0 / 6.0) / math.gamma(1.0 / 3.0)


def _series_pair(t, terms=25):
    """Maclaurin solutions f, g of y'' = t y with f(0)=1, g'(0)=1."""
    f = 1.0
    g = t
    cf = 1.0
    cg = t
    for k in range(1, terms):
        cf *= t ** 3 / ((3 * k) * (3 * k - 1))
        cg *= t ** 3 / ((3 * k + 1) * (3 * k))
        f += cf
        g += cg
    return f, g


def test_values_at_origin():
    v = airy_eval(0.0)
    assert abs(v.ai_value - AI0) < 1e-10
    assert abs(v.aip_value - AIP0) < 1e-10
    assert abs(v.bi_value - BI0) < 1e-10
    assert abs(v.bip_value - BIP0) < 1e-10


def test_series_on_small_arguments():
    # Ai = AI0 * f + AIP0 * g, Bi = BI0 * f + BIP0 * g
    for t in np.linspace(-1.5, 1.5, 13):
        f, g = _series_pair(float(t))
        v = airy_eval(float(t))
        assert abs(v.ai_value - (AI0 * f + AIP0 * g)) < 1e-12
        assert abs(v.bi_value - (BI0 * f + BIP0 * g)) < 1e-12


def test_wronskian_identity():
    """Ai Bi' - Ai' Bi = 1/pi at every argument.

    In the scaled representation the two exponent logs cancel exactly, so
    the identity can be checked on mantissas without overflow.
    """
    target = 1.0 / math.pi
    for t in np.linspace(-10.0, 10.0, 81):
        v = airy_eval(float(t))
        w = v.ai * v.bip - v.aip * v.bi
        assert abs(w - target) < 1e-10


def test_ode_residual_via_finite_differences():
    h = 3e-3
    stencil = np.array([1.0, -8.0, 8.0, -1.0]) / (12.0 * h)
    offsets = np.array([-2.0, -1.0, 1.0, 2.0]) * h
    for t in np.linspace(-10.0, 10.0, 161):
        vals = [airy_eval(float(t + d)) for d in offsets]
        v0 = airy_eval(float(t))
        aipp = float(np.dot(stencil, [v.aip_value for v in vals]))
        bipp = float(np.dot(stencil, [v.bip_value for v in vals]))
        r_ai = abs(aipp - t * v0.ai_value) / (1.0 + abs(t * v0.ai_value))
        r_bi = abs(bipp - t * v0.bi_value) / (1.0 + abs(t * v0.bi_value))
        assert r_ai < 1e-8
        assert r_bi < 1e-8


def test_scaled_mantissa_convention():
    # below zero the exponent logs vanish and mantissas are plain values
    v = airy_eval(-3.0)
    assert v.log_ai == 0.0 and v.log_bi == 0.0
    assert v.ai_value == v.ai
    # above zero the two logs are opposite
    w = airy_eval(4.0)
    assert w.log_ai == -w.log_bi
    assert w.log_bi == pytest.approx((2.0 / 3.0) * 4.0 ** 1.5)


def test_vectorized_matches_scalar():
    ts = np.array([-7.3, -0.2, 0.0, 1.9, 9.5])
    ai, aip, bi, bip, la, lb = airy_scaled(ts)
    for k, t in enumerate(ts):
        v = airy_eval(float(t))
        assert ai[k] == v.ai and bip[k] == v.bip
        assert la[k] == v.log_ai and lb[k] == v.log_bi


def test_no_overflow_across_admissible_range():
    ts = np.linspace(-100.0, 100.0, 401)
    out = airy_scaled(ts)
    for arr in out:
        assert np.all(np.isfinite(arr))


def test_argument_range_is_enforced():
    with pytest.raises(ArgumentOutOfRange):
        airy_eval(100.5)
    with pytest.raises(ArgumentOutOfRange):
        airy_scaled(np.array([0.0, float("nan")]))


def test_airy_values_is_frozen():
    v = airy_eval(1.0)
    assert isinstance(v, AiryValues)
    with pytest.raises(Exception):
        v.ai = 0.0


def test_gauss_legendre_exact_degree():
    rule = gauss_legendre(8)
    # degree 15 monomial: exact value 2/15 on [-1, 1]
    got = float(np.dot(rule.weights, rule.nodes ** 14))
    assert abs(got - 2.0 / 15.0) < 1e-14
    # degree 16 is beyond an 8-point rule
    off = float(np.dot(rule.weights, rule.nodes ** 16))
    assert abs(off - 2.0 / 17.0) > 1e-6


def test_gauss_legendre_basics():
    rule = gauss_legendre(5)
    assert rule.weights.sum() == pytest.approx(2.0)
    assert np.allclose(rule.nodes, -rule.nodes[::-1])
    assert rule.integrate(np.sin, 0.0, math.pi) == pytest.approx(2.0, abs=1e-6)
    x, w = rule.mapped(2.0, 5.0)
    assert x.min() > 2.0 and x.max() < 5.0
    assert w.sum() == pytest.approx(3.0)


def test_gauss_legendre_rejects_bad_orders():
    for bad in (0, -1, 65, 2.5, True):
        with pytest.raises(UnsupportedOrder):
            gauss_legendre(bad)


def test_rule_arrays_are_read_only():
    rule = gauss_legendre(3)
    with pytest.raises(ValueError):
        rule.nodes[0] = 0.0
