"""Gauss-Legendre quadrature on the slab velocity interval [-1, 1].

Every angular bracket <.> in the package (moments, dual objectives,
kinetic fluxes) is evaluated with one of these rules, so <1> = 2,
the measure of the interval.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = ["QuadratureRule", "build_rule", "integrate", "DEFAULT_ORDER"]

# Multipliers with norms up to ~40 produce sharply peaked exponential
# integrands; 64 nodes resolve them to near machine precision.
DEFAULT_ORDER = 64

_NEWTON_TOL = 1e-15
_MAX_NEWTON_SWEEPS = 100


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights for Gauss-Legendre integration on [-1, 1].

    Nodes are strictly increasing in (-1, 1), weights strictly positive
    and summing to 2.  A rule with q nodes integrates polynomials up to
    degree 2q - 1 exactly.  Immutable; safe to share between threads.
    """

    order: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)


def _legendre_and_derivative(q, x):
    """Value of P_q at x together with P_q' via the three-term recurrence."""
    p_prev = np.ones_like(x)
    p = x.copy()
    if q == 1:
        dp = np.ones_like(x)
        return p, dp
    for k in range(1, q):
        p_next = ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
        p_prev, p = p, p_next
    # derivative identity, valid away from +-1 (interior roots only)
    dp = q * (x * p - p_prev) / (x * x - 1.0)
    return p, dp


def build_rule(order: int) -> QuadratureRule:
    """Build the Gauss-Legendre rule with `order` nodes on [-1, 1].

    Roots of the Legendre polynomial are found by Newton iteration from
    the Chebyshev-like initial guess; the iteration is run to 1e-15.
    """
    if order < 1:
        raise ValueError(f"quadrature order must be >= 1, got {order}")
    if order == 1:
        return QuadratureRule(1, np.array([0.0]), np.array([2.0]))

    q = int(order)
    k = np.arange(q)
    x = np.cos(np.pi * (4 * k + 3) / (4 * q + 2))
    for _ in range(_MAX_NEWTON_SWEEPS):
        p, dp = _legendre_and_derivative(q, x)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) <= _NEWTON_TOL:
            break
    p, dp = _legendre_and_derivative(q, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)

    idx = np.argsort(x)
    x, w = x[idx], w[idx]
    # symmetrize so that v -> -v is exact at the node level (reflective
    # boundaries rely on this)
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return QuadratureRule(q, x, w)


def integrate(rule: QuadratureRule, f) -> float:
    """Quadrature value of the bracket <f> = integral of f over [-1, 1].

    `f` may be a callable of the node vector or an array of values at
    the nodes.  Non-finite values are rejected rather than propagated.
    """
    vals = f(rule.nodes) if callable(f) else np.asarray(f, dtype=float)
    if vals.shape != rule.nodes.shape:
        vals = np.broadcast_to(vals, rule.nodes.shape)
    if not np.all(np.isfinite(vals)):
        raise ArithmeticError("integrand is not finite at a quadrature node")
    return float(np.dot(rule.weights, vals))
