"""Monomial velocity basis and the moment algebra for slab geometry.

The basis is m(v) = [1, v, v^2, ..., v^N] on v in [-1, 1]; the zeroth
element is the constant m_0 = 1, which every lifting formula in the
dual solver relies on.  Moment vectors u = <m f> live in R^{N+1}.

Two coordinate changes appear throughout:

* normalization   u -> u / u_0          (requires u_0 > 0)
* fruncation      u -> [u_1, ..., u_N]  (drop the lowest block)

Their composition maps the realizable cone to the bounded reduced set
on which the surrogate models are trained.
"""

import numpy as np

__all__ = [
    "M0",
    "evaluate_basis",
    "basis_matrix",
    "normalize",
    "fruncate",
    "m1_realizable_gap",
]

# The constant value of the lowest basis function.
M0 = 1.0


def evaluate_basis(order: int, v) -> np.ndarray:
    """Basis values [1, v, ..., v^order] at one velocity or an array.

    Returns shape (order+1,) for scalar v, else (order+1,) + v.shape.
    """
    if order < 0:
        raise ValueError("basis order must be >= 0")
    v = np.asarray(v, dtype=float)
    powers = np.arange(order + 1)
    return v[np.newaxis, ...] ** powers.reshape((order + 1,) + (1,) * v.ndim)


def basis_matrix(order: int, nodes: np.ndarray) -> np.ndarray:
    """Matrix M with M[k, q] = v_q^k, shape (order+1, len(nodes))."""
    return np.vander(np.asarray(nodes, dtype=float), order + 1, increasing=True).T


def normalize(u) -> np.ndarray:
    """Scale a moment vector to unit zeroth moment: u / u_0."""
    u = np.asarray(u, dtype=float)
    if u[0] <= 0.0:
        raise ValueError(f"normalization requires u_0 > 0, got u_0 = {u[0]}")
    return u / u[0]


def fruncate(u) -> np.ndarray:
    """Drop the lowest-degree moment: [u_0, ..., u_N] -> [u_1, ..., u_N].

    Repeated application keeps removing the (currently) lowest block.
    """
    u = np.asarray(u, dtype=float)
    return u[1:].copy()


def m1_realizable_gap(u_bar) -> float:
    """Distance 1 - |u_1| of a normalized M1 moment to the realizable edge.

    Positive iff the moment pair [1, u_1] comes from a nonnegative
    density with mass one; zero at the beam limit.  Test helper only;
    interior membership for N >= 2 is certified by Newton convergence.
    """
    u_bar = np.asarray(u_bar, dtype=float)
    if abs(u_bar[0] - 1.0) > 1e-12:
        raise ValueError("m1_realizable_gap expects a normalized moment (u_0 = 1)")
    return float(1.0 - abs(u_bar[1]))
