"""Dual solvers and algebra for (regularized) entropy moment closures.

All closures here minimize the Maxwell-Boltzmann entropy
eta(f) = f log f - f over densities on [-1, 1], so the Legendre dual of
eta is exp and every ansatz is exponential in the basis, f = exp(a . m).

Three dual problems are covered, all strictly convex:

* standard           phi(a; u)   = <exp(a.m)> - a.u
* fully regularized  phi_G(a; u) = phi + (G/2) |a|^2
* partially reg.     phi_g(a; u) = phi + (u_0 g / 2) |a_#|^2

The partially regularized problem with penalty weight u_0 * gamma on
the fruncated block keeps the scaling invariance of the closure: it
reduces, for normalized moments, to an N-dimensional problem in the
reduced multiplier beta, and the full multiplier is recovered as

    alpha = [vartheta(beta) + log(u_0)/m_0, beta],

where vartheta pins the zeroth moment to one.  The entropy value, its
gradient

    g = alpha - (gamma/2) [|alpha_#|^2, 0],

and the moment reconstruction map

    psi_gamma(beta) = <m_# exp([vartheta(beta), beta] . m)> + gamma beta

are exposed for the sampler, the surrogate trainer, and the transport
solver.  Solves are pure functions of their inputs and safe to call
concurrently.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .moment_basis import M0, basis_matrix, fruncate, normalize
from .quadrature import DEFAULT_ORDER, QuadratureRule, build_rule

__all__ = [
    "EXPONENT_LIMIT",
    "ExponentOverflowError",
    "NewtonDivergenceError",
    "NewtonSettings",
    "ClosureConfig",
    "ClosureSolution",
    "NewtonObjective",
    "NewtonResult",
    "dual_objective_full",
    "full_gradient",
    "full_hessian",
    "dual_objective_reduced",
    "reduced_gradient",
    "reduced_hessian",
    "vartheta",
    "lift_multiplier",
    "entropy_gradient",
    "entropy_value",
    "reduced_entropy",
    "dual_entropy_value",
    "primal_entropy_value",
    "reconstruct_moments",
    "reconstruct_density",
    "density_at_nodes",
    "newton_minimize",
    "solve_reduced",
    "solve_reduced_batch",
    "solve_moment_closure",
    "solve_fully_regularized",
]

# Exponents a.m(v) above this are aborted instead of saturated: unbounded
# multipliers near the realizable boundary must fail observably.
EXPONENT_LIMIT = 70.0


class ExponentOverflowError(ArithmeticError):
    """An exponent a.m(v) exceeded the overflow guard at a quadrature node."""

    def __init__(self, max_exponent):
        self.max_exponent = float(max_exponent)
        super().__init__(
            f"exponent {self.max_exponent:.3g} exceeds guard {EXPONENT_LIMIT:g}; "
            "multiplier is too close to the realizable boundary"
        )


class NewtonDivergenceError(RuntimeError):
    """Newton failed to reach the gradient tolerance.

    Carries the last iterate and its gradient norm so callers can
    report how close the solve got (or attach a cell index).
    """

    def __init__(self, message, last_iterate=None, grad_norm=None, iterations=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.grad_norm = grad_norm
        self.iterations = iterations


@dataclass(frozen=True)
class NewtonSettings:
    """Damped-Newton controls: absolute gradient tolerance and Armijo line search."""

    grad_tol: float = 1e-8
    max_iter: int = 200
    shrink: float = 0.5
    armijo_c: float = 1e-4
    max_backtracks: int = 50

    def __post_init__(self):
        if self.grad_tol <= 0:
            raise ValueError("grad_tol must be positive")


@dataclass(frozen=True)
class ClosureConfig:
    """Configuration of one closure: moment order, regularization, quadrature.

    `mode` selects which dual problem the config describes; the reduced
    solver treats "standard" as the partially regularized problem with
    gamma = 0.  `big_gamma` is only read in fully regularized mode.
    """

    order: int
    gamma: float = 0.0
    mode: str = "partially_regularized"
    big_gamma: float = 0.0
    quad_order: int = DEFAULT_ORDER
    newton: NewtonSettings = field(default_factory=NewtonSettings)

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("moment order must be >= 1")
        if self.gamma < 0 or self.big_gamma < 0:
            raise ValueError("regularization weights must be >= 0")
        if self.mode not in ("standard", "partially_regularized", "fully_regularized"):
            raise ValueError(f"unknown closure mode {self.mode!r}")
        if self.quad_order < self.order + 1:
            raise ValueError("quad_order must be at least order + 1")

    def rule(self) -> QuadratureRule:
        return build_rule(self.quad_order)

    def with_grad_tol(self, grad_tol: float) -> "ClosureConfig":
        return replace(self, newton=replace(self.newton, grad_tol=grad_tol))


@dataclass
class ClosureSolution:
    """Result of one moment-closure solve.

    beta is the reduced multiplier of the normalized problem, alpha the
    lifted full multiplier at the original u_0, g the entropy gradient
    used to build the transport ansatz, h the entropy value.
    """

    beta: np.ndarray
    alpha: np.ndarray
    g: np.ndarray
    h: float
    iterations: int
    final_grad_norm: float
    hessian_cond: float


def _guarded_exp(exponents) -> np.ndarray:
    exponents = np.asarray(exponents, dtype=float)
    top = np.max(exponents)
    if not np.isfinite(top) or top > EXPONENT_LIMIT:
        raise ExponentOverflowError(top)
    return np.exp(exponents)


def _log_partition_and_mean(beta, rule, ms):
    """log <exp(b.m_#)> and the moment mean, shifted so nothing underflows."""
    exponents = beta @ ms
    top = float(np.max(exponents))
    if not np.isfinite(top) or top > EXPONENT_LIMIT:
        raise ExponentOverflowError(top)
    e = np.exp(exponents - top) * rule.weights
    z = float(np.sum(e))
    return top + math.log(z), (ms @ e) / z, e / z


def _sharp_matrix(order, rule):
    """Fruncated basis values m_#(v_q), shape (order, q)."""
    return basis_matrix(order, rule.nodes)[1:]


# ---------------------------------------------------------------------------
# dual objectives, gradients, Hessians
# ---------------------------------------------------------------------------

def dual_objective_full(alpha, u, gamma, rule) -> float:
    """Partially regularized dual objective at a full multiplier.

    phi_g(a; u) = <exp(a.m)> - a.u + (u_0 gamma / 2) |a_#|^2.
    gamma = 0 recovers the standard dual.
    """
    alpha = np.asarray(alpha, dtype=float)
    u = np.asarray(u, dtype=float)
    m = basis_matrix(alpha.size - 1, rule.nodes)
    e = _guarded_exp(alpha @ m)
    penalty = 0.5 * u[0] * gamma * float(alpha[1:] @ alpha[1:])
    return float(rule.weights @ e - alpha @ u + penalty)


def full_gradient(alpha, u, gamma, rule) -> np.ndarray:
    """Gradient of `dual_objective_full` with respect to alpha."""
    alpha = np.asarray(alpha, dtype=float)
    u = np.asarray(u, dtype=float)
    m = basis_matrix(alpha.size - 1, rule.nodes)
    e = _guarded_exp(alpha @ m)
    grad = m @ (rule.weights * e) - u
    grad[1:] += u[0] * gamma * alpha[1:]
    return grad


def full_hessian(alpha, rule) -> np.ndarray:
    """Unregularized dual Hessian <m (x) m exp(a.m)>."""
    alpha = np.asarray(alpha, dtype=float)
    m = basis_matrix(alpha.size - 1, rule.nodes)
    e = _guarded_exp(alpha @ m)
    return (m * (rule.weights * e)) @ m.T


def dual_objective_reduced(beta, w, gamma, rule, m0=M0) -> float:
    """Reduced dual objective of the normalized problem.

    phi_hat(b; w) = 1/m0 + (1/m0)(log m0 + log <exp(b.m_#)>)
                    - b.w + (gamma/2) |b|^2,
    strictly convex and twice differentiable in b.
    """
    beta = np.asarray(beta, dtype=float)
    w = np.asarray(w, dtype=float)
    ms = _sharp_matrix(beta.size, rule)
    log_z, _, _ = _log_partition_and_mean(beta, rule, ms)
    return (
        1.0 / m0
        + (math.log(m0) + log_z) / m0
        - float(beta @ w)
        + 0.5 * gamma * float(beta @ beta)
    )


def reduced_gradient(beta, w, gamma, rule, m0=M0) -> np.ndarray:
    """Gradient of the reduced dual: <m_# e>/(m0 <e>) - w + gamma b."""
    beta = np.asarray(beta, dtype=float)
    w = np.asarray(w, dtype=float)
    ms = _sharp_matrix(beta.size, rule)
    _, mean, _ = _log_partition_and_mean(beta, rule, ms)
    return mean / m0 - w + gamma * beta


def reduced_hessian(beta, gamma, rule, m0=M0) -> np.ndarray:
    """Reduced dual Hessian: covariance of m_# under exp(b.m_#), plus gamma I.

    Symmetric positive definite for gamma > 0; positive semidefinite
    (and in slab geometry in fact definite) at gamma = 0.
    """
    beta = np.asarray(beta, dtype=float)
    ms = _sharp_matrix(beta.size, rule)
    _, mean, density = _log_partition_and_mean(beta, rule, ms)
    second = (ms * density) @ ms.T
    return (second - np.outer(mean, mean)) / m0 + gamma * np.eye(beta.size)


# ---------------------------------------------------------------------------
# lifting, entropy values, reconstruction
# ---------------------------------------------------------------------------

def vartheta(beta, rule, m0=M0) -> float:
    """Zeroth multiplier component recovering <m_0 exp(t m_0 + b.m_#)> = 1.

    t(b) = -(1/m0)(log m0 + log <exp(b.m_#)>).
    """
    beta = np.asarray(beta, dtype=float)
    ms = _sharp_matrix(beta.size, rule)
    log_z, _, _ = _log_partition_and_mean(beta, rule, ms)
    return -(math.log(m0) + log_z) / m0


def lift_multiplier(beta, u0, rule, m0=M0) -> np.ndarray:
    """Full multiplier for moment u with fruncated normalized part solved by beta.

    alpha = [vartheta(beta) + log(u_0)/m_0, beta]; the log shift is the
    exact scaling covariance of the closure.
    """
    if u0 <= 0:
        raise ValueError(f"lifting requires u_0 > 0, got {u0}")
    beta = np.asarray(beta, dtype=float)
    return np.concatenate(([vartheta(beta, rule, m0) + math.log(u0) / m0], beta))


def entropy_gradient(alpha, gamma) -> np.ndarray:
    """Entropy gradient from the multiplier: g = a - (gamma/2)[|a_#|^2, 0].

    For gamma = 0 the gradient and the multiplier coincide.
    """
    alpha = np.asarray(alpha, dtype=float)
    g = alpha.copy()
    g[0] -= 0.5 * gamma * float(alpha[1:] @ alpha[1:])
    return g


def reduced_entropy(w, beta, gamma, rule, m0=M0) -> float:
    """Reduced entropy value h_hat(w) = -phi_hat(beta; w) at a minimizer beta."""
    return -dual_objective_reduced(beta, w, gamma, rule, m0)


def entropy_value(u, beta, gamma, rule, m0=M0) -> float:
    """Entropy of an unnormalized moment via the scaling extension.

    h(u) = u_0 h_hat(fruncate(normalize(u))) + (u_0/m_0) log u_0.
    Agrees with -phi_g at the lifted multiplier to roundoff.
    """
    u = np.asarray(u, dtype=float)
    w = fruncate(normalize(u))
    u0 = float(u[0])
    return u0 * reduced_entropy(w, beta, gamma, rule, m0) + u0 * math.log(u0) / m0


def dual_entropy_value(u, alpha, gamma, rule) -> float:
    """Entropy as the negative full dual objective, -phi_g(alpha; u)."""
    return -dual_objective_full(alpha, u, gamma, rule)


def primal_entropy_value(u, alpha, gamma, rule) -> float:
    """Entropy evaluated on the primal side.

    <eta(f)> + |<m_# f> - u_#|^2 / (2 u_0 gamma) at f = exp(alpha . m);
    for gamma = 0 the penalty is omitted (the moments then match).
    """
    alpha = np.asarray(alpha, dtype=float)
    u = np.asarray(u, dtype=float)
    m = basis_matrix(alpha.size - 1, rule.nodes)
    exponents = alpha @ m
    f = _guarded_exp(exponents)
    value = float(rule.weights @ (f * exponents - f))
    if gamma > 0:
        resid = (m[1:] * rule.weights) @ f - u[1:]
        value += float(resid @ resid) / (2.0 * u[0] * gamma)
    return value


def reconstruct_moments(beta, gamma, rule, m0=M0) -> np.ndarray:
    """Moment reconstruction map psi_gamma of the reduced multiplier.

    psi_gamma(b) = <m_# exp([vartheta(b), b] . m)> + gamma b.  At the
    minimizer for w it returns w up to the solver tolerance.
    """
    beta = np.asarray(beta, dtype=float)
    alpha = np.concatenate(([vartheta(beta, rule, m0)], beta))
    m = basis_matrix(beta.size, rule.nodes)
    e = _guarded_exp(alpha @ m) * rule.weights
    return m[1:] @ e + gamma * beta


def reconstruct_density(g):
    """Exponential ansatz f(v) = exp(g . m(v)) for a gradient/multiplier g."""
    g = np.asarray(g, dtype=float)
    powers = np.arange(g.size)

    def density(v):
        v = np.asarray(v, dtype=float)
        exponents = np.polynomial.polynomial.polyval(v, g)
        top = np.max(exponents)
        if not np.isfinite(top) or top > EXPONENT_LIMIT:
            raise ExponentOverflowError(top)
        return np.exp(exponents)

    density.coefficients = g
    density.powers = powers
    return density


def density_at_nodes(g, rule) -> np.ndarray:
    """Ansatz exp(g . m) evaluated at the quadrature nodes."""
    g = np.asarray(g, dtype=float)
    m = basis_matrix(g.size - 1, rule.nodes)
    return _guarded_exp(g @ m)


# ---------------------------------------------------------------------------
# Newton minimization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NewtonObjective:
    """Bundle of callables defining a strictly convex C^2 objective."""

    value: callable
    gradient: callable
    hessian: callable


@dataclass
class NewtonResult:
    x: np.ndarray
    iterations: int
    grad_norm: float
    grad_norm_trace: list


def newton_minimize(objective: NewtonObjective, start, settings: NewtonSettings) -> NewtonResult:
    """Damped Newton with Armijo backtracking on a convex objective.

    The Newton system is solved by Cholesky; if factorization fails
    (possible only for the unregularized problem near the realizable
    boundary) the step falls back to steepest descent so progress is
    preserved.  Overflowing trial points are treated as +inf by the
    line search.
    """
    x = np.asarray(start, dtype=float).copy()
    fx = objective.value(x)
    trace = []
    for iteration in range(settings.max_iter):
        grad = objective.gradient(x)
        grad_norm = float(np.linalg.norm(grad))
        trace.append(grad_norm)
        if grad_norm <= settings.grad_tol:
            return NewtonResult(x, iteration, grad_norm, trace)

        hess = objective.hessian(x)
        try:
            chol = np.linalg.cholesky(hess)
            direction = np.linalg.solve(chol.T, np.linalg.solve(chol, -grad))
        except np.linalg.LinAlgError:
            direction = -grad
        slope = float(grad @ direction)
        if slope >= 0 or not np.all(np.isfinite(direction)):
            direction = -grad
            slope = -grad_norm**2

        step = 1.0
        accepted = False
        # near the optimum the true decrease falls below the resolution of
        # the objective; allow steps that are flat to roundoff
        allowance = 32 * np.finfo(float).eps * (1.0 + abs(fx))
        for _ in range(settings.max_backtracks):
            candidate = x + step * direction
            try:
                f_new = objective.value(candidate)
            except ExponentOverflowError:
                f_new = np.inf
            if np.isfinite(f_new) and f_new <= fx + settings.armijo_c * step * slope + allowance:
                x, fx = candidate, f_new
                accepted = True
                break
            step *= settings.shrink
        if not accepted:
            raise NewtonDivergenceError(
                f"line search stalled after {settings.max_backtracks} backtracks "
                f"(gradient norm {grad_norm:.3e}); input may sit on the realizable boundary",
                last_iterate=x,
                grad_norm=grad_norm,
                iterations=iteration,
            )

    grad_norm = float(np.linalg.norm(objective.gradient(x)))
    if grad_norm <= settings.grad_tol:
        return NewtonResult(x, settings.max_iter, grad_norm, trace)
    raise NewtonDivergenceError(
        f"no convergence in {settings.max_iter} Newton iterations "
        f"(gradient norm {grad_norm:.3e})",
        last_iterate=x,
        grad_norm=grad_norm,
        iterations=settings.max_iter,
    )


def solve_reduced(w, config: ClosureConfig, rule=None, start=None) -> ClosureSolution:
    """Minimize the reduced dual at fruncated normalized moments w.

    For gamma = 0 the input must be strictly realizable, otherwise the
    iteration diverges and reports it.  Starts at beta = 0 (the
    isotropic multiplier), which is feasible for every input.
    """
    w = np.asarray(w, dtype=float)
    rule = config.rule() if rule is None else rule
    gamma = config.gamma if config.mode != "standard" else 0.0

    objective = NewtonObjective(
        value=lambda b: dual_objective_reduced(b, w, gamma, rule),
        gradient=lambda b: reduced_gradient(b, w, gamma, rule),
        hessian=lambda b: reduced_hessian(b, gamma, rule),
    )
    x0 = np.zeros(w.size) if start is None else np.asarray(start, dtype=float)
    result = newton_minimize(objective, x0, config.newton)
    beta = result.x
    alpha = lift_multiplier(beta, 1.0, rule)
    hess = reduced_hessian(beta, gamma, rule)
    eigs = np.linalg.eigvalsh(hess)
    return ClosureSolution(
        beta=beta,
        alpha=alpha,
        g=entropy_gradient(alpha, gamma),
        h=reduced_entropy(w, beta, gamma, rule),
        iterations=result.iterations,
        final_grad_norm=result.grad_norm,
        hessian_cond=float(eigs[-1] / eigs[0]) if eigs[0] > 0 else np.inf,
    )


def solve_moment_closure(u, config: ClosureConfig, rule=None, start=None) -> ClosureSolution:
    """Full closure pipeline for an unnormalized moment vector.

    Normalize, fruncate, solve the reduced problem, lift the multiplier
    with the log(u_0) shift, and assemble the entropy gradient and value.
    """
    u = np.asarray(u, dtype=float)
    rule = config.rule() if rule is None else rule
    gamma = config.gamma if config.mode != "standard" else 0.0
    w = fruncate(normalize(u))
    reduced = solve_reduced(w, config, rule=rule, start=start)
    alpha = lift_multiplier(reduced.beta, float(u[0]), rule)
    return ClosureSolution(
        beta=reduced.beta,
        alpha=alpha,
        g=entropy_gradient(alpha, gamma),
        h=entropy_value(u, reduced.beta, gamma, rule),
        iterations=reduced.iterations,
        final_grad_norm=reduced.final_grad_norm,
        hessian_cond=reduced.hessian_cond,
    )


def solve_fully_regularized(u, big_gamma, config: ClosureConfig, rule=None) -> np.ndarray:
    """Multiplier of the fully regularized dual with penalty (G/2)|alpha|^2.

    Feasible for every u in R^{N+1}; the Hessian is the unregularized
    one plus G I, so its condition number is bounded by 1 + lmax/G.
    """
    if big_gamma <= 0:
        raise ValueError("fully regularized solve needs big_gamma > 0")
    u = np.asarray(u, dtype=float)
    rule = config.rule() if rule is None else rule
    dim = u.size

    def value(a):
        m = basis_matrix(dim - 1, rule.nodes)
        e = _guarded_exp(a @ m)
        return float(rule.weights @ e - a @ u + 0.5 * big_gamma * (a @ a))

    def gradient(a):
        m = basis_matrix(dim - 1, rule.nodes)
        e = _guarded_exp(a @ m)
        return m @ (rule.weights * e) - u + big_gamma * a

    def hessian(a):
        return full_hessian(a, rule) + big_gamma * np.eye(dim)

    result = newton_minimize(NewtonObjective(value, gradient, hessian), np.zeros(dim), config.newton)
    return result.x


# ---------------------------------------------------------------------------
# batched reduced solves (transport/sampling hot path)
# ---------------------------------------------------------------------------

@dataclass
class BatchSolution:
    """Reduced solves for a batch of inputs; row i answers row i of w."""

    beta: np.ndarray        # (B, N)
    h: np.ndarray           # (B,)
    vartheta: np.ndarray    # (B,)
    iterations: int
    failed: np.ndarray      # (B,) bool


def _batch_state(beta, wq, ms):
    """Shifted exponential weights, log-partitions, and moment means per row."""
    exponents = beta @ ms
    top = np.max(exponents, axis=1)
    worst = np.max(top)
    if not np.isfinite(worst) or worst > EXPONENT_LIMIT:
        raise ExponentOverflowError(worst)
    e = np.exp(exponents - top[:, None]) * wq
    z = e.sum(axis=1)
    log_z = top + np.log(z)
    density = e / z[:, None]
    mean = density @ ms.T
    return density, log_z, mean


def solve_reduced_batch(w, config: ClosureConfig, rule=None, start=None) -> BatchSolution:
    """Vectorized damped Newton over a batch of reduced problems.

    Each row is an independent N-dimensional strictly convex solve; the
    iteration runs them jointly with per-row Armijo acceptance.  Rows
    that stall are retried with the scalar solver; rows that still fail
    are flagged in `failed` rather than raising, so the transport loop
    can attach cell indices.
    """
    w = np.atleast_2d(np.asarray(w, dtype=float))
    rule = config.rule() if rule is None else rule
    gamma = config.gamma if config.mode != "standard" else 0.0
    settings = config.newton
    n_batch, dim = w.shape
    ms = _sharp_matrix(dim, rule)
    wq = rule.weights

    beta = np.zeros_like(w) if start is None else np.array(start, dtype=float, copy=True)
    eye = np.eye(dim)

    fx = objective_rows(beta, w, gamma, ms, wq)
    if np.any(~np.isfinite(fx)):
        raise ExponentOverflowError(np.inf)

    failed = np.zeros(n_batch, dtype=bool)
    iterations = 0
    for iterations in range(settings.max_iter):
        density, log_z, mean = _batch_state(beta, wq, ms)
        grad = mean - w + gamma * beta
        grad_norms = np.linalg.norm(grad, axis=1)
        active = ~failed & (grad_norms > settings.grad_tol)
        if not np.any(active):
            break

        idx = np.flatnonzero(active)
        second = np.einsum("bq,jq,kq->bjk", density[idx], ms, ms)
        hess = second - np.einsum("bj,bk->bjk", mean[idx], mean[idx]) + gamma * eye
        try:
            direction = -np.linalg.solve(hess, grad[idx][..., None])[..., 0]
        except np.linalg.LinAlgError:
            direction = -grad[idx]
        slope = np.einsum("ij,ij->i", grad[idx], direction)
        bad_dir = (slope >= 0) | ~np.all(np.isfinite(direction), axis=1)
        if np.any(bad_dir):
            direction[bad_dir] = -grad[idx][bad_dir]
            slope[bad_dir] = -(grad_norms[idx][bad_dir] ** 2)

        step = np.ones(idx.size)
        pending = np.ones(idx.size, dtype=bool)
        allowance = 32 * np.finfo(float).eps * (1.0 + np.abs(fx[idx]))
        for _ in range(settings.max_backtracks):
            if not np.any(pending):
                break
            trial = beta[idx] + step[:, None] * direction
            trial_f = objective_rows(trial, w[idx], gamma, ms, wq)
            accept = pending & np.isfinite(trial_f) & (
                trial_f <= fx[idx] + settings.armijo_c * step * slope + allowance
            )
            take = np.flatnonzero(accept)
            if take.size:
                rows = idx[take]
                beta[rows] = trial[take]
                fx[rows] = trial_f[take]
                pending[take] = False
            step[pending] *= settings.shrink
        if np.any(pending):
            # stalled rows fall back to the robust scalar path once
            for j in np.flatnonzero(pending):
                row = idx[j]
                try:
                    sol = solve_reduced(w[row], config, rule=rule)
                    beta[row] = sol.beta
                    fx[row] = dual_objective_reduced(sol.beta, w[row], gamma, rule)
                except (NewtonDivergenceError, ExponentOverflowError):
                    failed[row] = True

    density, log_z, mean = _batch_state(beta, wq, ms)
    grad_norms = np.linalg.norm(mean - w + gamma * beta, axis=1)
    failed |= grad_norms > 10 * settings.grad_tol
    h = -(1.0 + log_z - np.einsum("ij,ij->i", beta, w)
          + 0.5 * gamma * np.einsum("ij,ij->i", beta, beta))
    return BatchSolution(beta=beta, h=h, vartheta=-log_z, iterations=iterations, failed=failed)


def objective_rows(b, w, gamma, ms, wq):
    """Reduced objective for row-matched multipliers and moments (m0 = 1)."""
    exponents = b @ ms
    top = np.max(exponents, axis=1)
    vals = np.full(b.shape[0], np.inf)
    ok = np.isfinite(top) & (top <= EXPONENT_LIMIT)
    if np.any(ok):
        shifted = np.exp(exponents[ok] - top[ok, None]) * wq
        log_z = top[ok] + np.log(shifted.sum(axis=1))
        vals[ok] = (
            1.0
            + log_z
            - np.einsum("ij,ij->i", b[ok], w[ok])
            + 0.5 * gamma * np.einsum("ij,ij->i", b[ok], b[ok])
        )
    return vals
