"""Airy function evaluation with overflow-safe scaling, and Gauss-Legendre rules.

Both homogeneous solutions of u'' = t u are needed on cells where the frozen
reaction coefficient is large, which pushes the Airy argument far into the
exponential regime.  ``airy_eval`` therefore returns mantissas together with
log-scale factors: Ai(t) = ai * exp(log_ai) and Bi(t) = bi * exp(log_bi),
so downstream code can combine values in log space and never materialize
an overflowed double.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import special as _sp

from .errors import ArgumentOutOfRange, UnsupportedOrder

AIRY_MAX_ARG = 100.0
MAX_QUAD_ORDER = 64


@dataclass(frozen=True)
class AiryValues:
    """Scaled Airy values at one argument.

    ``ai, aip, bi, bip`` are mantissas; the true values are obtained by
    multiplying with ``exp(log_ai)`` (for Ai and Ai') or ``exp(log_bi)``
    (for Bi and Bi').  For t <= 0 both log factors are zero and the
    mantissas are the plain function values.
    """

    t: float
    ai: float
    aip: float
    bi: float
    bip: float
    log_ai: float
    log_bi: float

    @property
    def ai_value(self) -> float:
        return self.ai * np.exp(self.log_ai)

    @property
    def aip_value(self) -> float:
        return self.aip * np.exp(self.log_ai)

    @property
    def bi_value(self) -> float:
        return self.bi * np.exp(self.log_bi)

    @property
    def bip_value(self) -> float:
        return self.bip * np.exp(self.log_bi)


def _zeta(t):
    """Exponent (2/3) t^(3/2) used by the scaled representation for t > 0."""
    tp = np.maximum(np.asarray(t, dtype=float), 0.0)
    return (2.0 / 3.0) * tp ** 1.5


def airy_scaled(t):
    """Vectorized scaled Airy evaluation.

    Returns ``(ai, aip, bi, bip, log_ai, log_bi)`` with the same convention
    as :class:`AiryValues`.  Arguments must satisfy |t| <= 100.
    """
    t = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(np.abs(t) > AIRY_MAX_ARG):
        raise ArgumentOutOfRange(
            f"airy argument outside [-{AIRY_MAX_ARG:g}, {AIRY_MAX_ARG:g}]"
        )
    # airye only covers the growing/decaying branch t > 0; the oscillatory
    # branch needs the plain routine (airye yields nan for Ai there), and
    # plain values neither overflow nor underflow for t <= 0.
    ai, aip, bi, bip = _sp.airye(np.maximum(t, 0.0))
    neg = t < 0.0
    if np.any(neg):
        pai, paip, pbi, pbip = _sp.airy(np.where(neg, t, 0.0))
        ai = np.where(neg, pai, ai)
        aip = np.where(neg, paip, aip)
        bi = np.where(neg, pbi, bi)
        bip = np.where(neg, pbip, bip)
    z = _zeta(t)
    log_ai = -z
    log_bi = z
    return ai, aip, bi, bip, log_ai, log_bi


def airy_eval(t: float) -> AiryValues:
    """Evaluate Ai, Bi and their first derivatives at a single argument."""
    ai, aip, bi, bip, log_ai, log_bi = airy_scaled(float(t))
    return AiryValues(
        t=float(t),
        ai=float(ai),
        aip=float(aip),
        bi=float(bi),
        bip=float(bip),
        log_ai=float(log_ai),
        log_bi=float(log_bi),
    )


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre nodes and weights on the reference interval [-1, 1]."""

    order: int
    nodes: np.ndarray
    weights: np.ndarray

    def mapped(self, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights transplanted to the interval [a, b]."""
        half = 0.5 * (b - a)
        mid = 0.5 * (a + b)
        return mid + half * self.nodes, half * self.weights

    def integrate(self, fn, a: float, b: float) -> float:
        x, w = self.mapped(a, b)
        return float(np.dot(w, fn(x)))


def gauss_legendre(order: int) -> QuadratureRule:
    """Gauss-Legendre rule of the given order (1 <= order <= 64)."""
    if not isinstance(order, (int, np.integer)) or isinstance(order, bool):
        raise UnsupportedOrder(f"quadrature order must be an integer, got {order!r}")
    if order < 1 or order > MAX_QUAD_ORDER:
        raise UnsupportedOrder(
            f"quadrature order {order} outside [1, {MAX_QUAD_ORDER}]"
        )
    nodes, weights = leggauss(int(order))
    nodes = np.asarray(nodes, dtype=float)
    weights = np.asarray(weights, dtype=float)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(order=int(order), nodes=nodes, weights=weights)
