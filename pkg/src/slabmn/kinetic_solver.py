"""Finite-volume solver for the closed moment system in slab geometry.

The moment system is advanced on a uniform 1D grid with a kinetic
upwind flux: each closure reconstructs a velocity density f per cell,
and the interface flux is the half-range moment

    F(u_L, u_R) = < m v [ f_L 1{v>0} + f_R 1{v<0} ] >

evaluated with the shared Gauss-Legendre rule.  Isotropic scattering
enters through its exact moment form sigma_s ((u_0/2) <m> - u), which
conserves the zeroth moment identically; absorption subtracts
sigma_a u, and sources are isotropic.  Time stepping is Heun's method
(two Euler stages, then averaging) under a CFL bound with unit maximum
speed.

Closures are pluggable: linear truncation (P_N), the Newton solver for
the regularized entropy closure (M_N), or a trained network surrogate.
A discrete-ordinates (S_N) path transports per-ordinate values directly
and serves as the reference solution.  Closure evaluations within one
step are batched over cells; the time loop itself is sequential and
deterministic.
"""

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .entropy_core import (
    EXPONENT_LIMIT,
    ClosureConfig,
    ExponentOverflowError,
    solve_reduced_batch,
)
from .moment_basis import basis_matrix
from .quadrature import DEFAULT_ORDER, build_rule
from .surrogate import TrainedClosure

__all__ = [
    "BoundaryCondition",
    "Mesh1D",
    "MaterialField",
    "GridState",
    "ClosureFailureError",
    "PnClosure",
    "NewtonClosure",
    "NetworkClosure",
    "make_closure",
    "upwind_flux",
    "collision_moments",
    "step_heun",
    "run_transport",
    "run_sn_transport",
    "solve_sn",
    "run_case",
    "build_case",
    "plane_source_density",
    "RunResult",
    "e_rel",
    "U0_FLOOR",
]

U0_FLOOR = 1e-10


class ClosureFailureError(RuntimeError):
    """A closure could not be evaluated; carries cell indices and time."""

    def __init__(self, cells, t=None):
        self.cells = list(np.atleast_1d(cells))
        self.t = t
        at = f" at t={t:.6g}" if t is not None else ""
        super().__init__(f"closure evaluation failed in cells {self.cells}{at}")


@dataclass(frozen=True)
class BoundaryCondition:
    """Either reflective or Dirichlet with a prescribed inflow density.

    For Dirichlet the density is a constant or a callable of the
    velocity nodes; vacuum is Dirichlet with value 0.
    """

    kind: str                 # "dirichlet" | "reflective"
    density: object = 0.0     # scalar or callable(v_nodes) -> values

    def __post_init__(self):
        if self.kind not in ("dirichlet", "reflective"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")


@dataclass(frozen=True)
class Mesh1D:
    n_cells: int
    x_lo: float
    x_hi: float
    left: BoundaryCondition = field(default_factory=lambda: BoundaryCondition("dirichlet", 0.0))
    right: BoundaryCondition = field(default_factory=lambda: BoundaryCondition("dirichlet", 0.0))

    def __post_init__(self):
        if self.n_cells < 2:
            raise ValueError("mesh needs at least 2 cells")
        if self.x_hi <= self.x_lo:
            raise ValueError("empty domain")

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return self.x_lo + (np.arange(self.n_cells) + 0.5) * self.dx


@dataclass
class MaterialField:
    """Per-cell scattering and absorption rates plus an isotropic source."""

    sigma_s: np.ndarray
    sigma_a: np.ndarray
    source: np.ndarray

    def __post_init__(self):
        if np.any(self.sigma_s < 0) or np.any(self.sigma_a < 0):
            raise ValueError("cross sections must be nonnegative")

    @property
    def sigma_t(self) -> np.ndarray:
        return self.sigma_s + self.sigma_a

    @classmethod
    def uniform(cls, n_cells, sigma_s=0.0, sigma_a=0.0, source=0.0):
        return cls(
            np.full(n_cells, float(sigma_s)),
            np.full(n_cells, float(sigma_a)),
            np.full(n_cells, float(source)),
        )

    @classmethod
    def piecewise(cls, mesh: Mesh1D, segments):
        """Build from (x_start, x_end, sigma_s, sigma_a) tuples."""
        x = mesh.centers
        sigma_s = np.zeros(mesh.n_cells)
        sigma_a = np.zeros(mesh.n_cells)
        for x0, x1, ss, sa in segments:
            sel = (x >= x0) & (x < x1)
            sigma_s[sel] = ss
            sigma_a[sel] = sa
        return cls(sigma_s, sigma_a, np.zeros(mesh.n_cells))


@dataclass
class GridState:
    """Per-cell moment vectors plus the clock."""

    U: np.ndarray        # (n_cells, order+1)
    t: float = 0.0
    step: int = 0


# ---------------------------------------------------------------------------
# closures
# ---------------------------------------------------------------------------

@dataclass
class ClosureEval:
    f_nodes: np.ndarray          # (n_cells, q) densities at quadrature nodes
    entropy: np.ndarray | None   # (n_cells,) closure entropy, None for P_N


class PnClosure:
    """Linear truncation closure: f is the degree-N polynomial matching u.

    In an orthonormal basis this is the plain expansion u . m; with
    monomials the coefficients are obtained through the Gram matrix so
    that <m f_u> = u holds exactly.  No positivity guarantee.
    """

    positivity_floor = False

    def __init__(self, order, rule):
        self.order = order
        self.rule = rule
        self.name = f"p{order}"
        m = basis_matrix(order, rule.nodes)
        gram = (m * rule.weights) @ m.T
        self._coef_map = np.linalg.solve(gram, m)   # (order+1, q)

    def evaluate(self, U, t=None) -> ClosureEval:
        return ClosureEval(f_nodes=np.asarray(U) @ self._coef_map, entropy=None)

    def reset(self):
        pass


class NewtonClosure:
    """Regularized entropy closure solved per cell by damped Newton.

    Solves the reduced problem for every cell in one batched iteration,
    warm-starting from the previous evaluation, lifts the multiplier,
    applies the gradient correction, and reconstructs f = exp(g . m).
    """

    positivity_floor = True

    def __init__(self, config: ClosureConfig, rule=None):
        self.config = config
        self.rule = config.rule() if rule is None else rule
        self.gamma = config.gamma if config.mode != "standard" else 0.0
        self.name = f"m{config.order}_newton"
        self._m = basis_matrix(config.order, self.rule.nodes)
        self._beta_cache = None

    def reset(self):
        self._beta_cache = None

    def evaluate(self, U, t=None) -> ClosureEval:
        U = np.asarray(U, dtype=float)
        if np.any(U[:, 0] <= 0.0):
            cells = np.flatnonzero(U[:, 0] <= 0.0)
            raise ClosureFailureError(cells, t)
        W = U[:, 1:] / U[:, 0:1]
        start = None
        if self._beta_cache is not None and self._beta_cache.shape == W.shape:
            start = self._beta_cache
        try:
            batch = solve_reduced_batch(W, self.config, rule=self.rule, start=start)
        except ExponentOverflowError:
            if start is None:
                raise
            batch = solve_reduced_batch(W, self.config, rule=self.rule)
        if np.any(batch.failed):
            raise ClosureFailureError(np.flatnonzero(batch.failed), t)
        self._beta_cache = batch.beta.copy()

        log_u0 = np.log(U[:, 0])
        beta_sq = np.einsum("ij,ij->i", batch.beta, batch.beta)
        g0 = batch.vartheta + log_u0 - 0.5 * self.gamma * beta_sq
        G = np.concatenate([g0[:, None], batch.beta], axis=1)
        exponents = G @ self._m
        top = np.max(exponents)
        if not np.isfinite(top) or top > EXPONENT_LIMIT:
            raise ClosureFailureError(np.flatnonzero(exponents.max(axis=1) > EXPONENT_LIMIT), t)
        entropy = U[:, 0] * batch.h + U[:, 0] * log_u0
        return ClosureEval(f_nodes=np.exp(exponents), entropy=entropy)


class NetworkClosure:
    """Trained surrogate used exactly like the Newton closure.

    The entropy gradient is assembled from the network value and input
    gradient; the reported entropy is the network's convex extension,
    so the dissipation diagnostics apply to it verbatim.
    """

    positivity_floor = True

    def __init__(self, trained: TrainedClosure, order, rule):
        self.trained = trained
        self.order = order
        self.rule = rule
        self.gamma = trained.gamma
        self.name = f"m{order}_{trained.arch}"
        self._m = basis_matrix(order, rule.nodes)

    def reset(self):
        pass

    def evaluate(self, U, t=None) -> ClosureEval:
        U = np.asarray(U, dtype=float)
        if np.any(U[:, 0] <= 0.0):
            raise ClosureFailureError(np.flatnonzero(U[:, 0] <= 0.0), t)
        W = U[:, 1:] / U[:, 0:1]
        vals, beta = self.trained.reduced_entropy_and_multiplier(W)
        log_u0 = np.log(U[:, 0])
        g0 = vals - np.einsum("ij,ij->i", W, beta) + log_u0 + 1.0
        G = np.concatenate([g0[:, None], beta], axis=1)
        exponents = G @ self._m
        top = np.max(exponents)
        if not np.isfinite(top) or top > EXPONENT_LIMIT:
            raise ClosureFailureError(np.flatnonzero(exponents.max(axis=1) > EXPONENT_LIMIT), t)
        entropy = U[:, 0] * vals + U[:, 0] * log_u0
        return ClosureEval(f_nodes=np.exp(exponents), entropy=entropy)


def make_closure(kind, order, rule, gamma=0.0, trained=None, newton=None):
    """Closure factory for the named kinds: pn, mn_newton, mn_network."""
    if kind == "pn":
        return PnClosure(order, rule)
    if kind == "mn_newton":
        config = ClosureConfig(order=order, gamma=gamma, quad_order=rule.order)
        if newton is not None:
            config = replace(config, newton=newton)
        return NewtonClosure(config, rule=rule)
    if kind == "mn_network":
        if trained is None:
            raise ValueError("mn_network closure needs a trained model")
        return NetworkClosure(trained, order, rule)
    raise ValueError(f"unknown closure kind {kind!r}")


# ---------------------------------------------------------------------------
# fluxes and sources
# ---------------------------------------------------------------------------

def _flux_kernels(order, rule):
    """Upwind kernels K+ and K- with K[q, j] = w_q v_q m_j(v_q) 1{v>0 or v<0}."""
    m = basis_matrix(order, rule.nodes)
    vw = rule.nodes * rule.weights
    pos = rule.nodes > 0
    k_pos = (m * (vw * pos)).T
    k_neg = (m * (vw * ~pos)).T
    return k_pos, k_neg


def upwind_flux(u_i, u_j, n_ij, closure, rule) -> np.ndarray:
    """Kinetic upwind flux between two states across a face with normal n_ij.

    n_ij = +1 means the face's outward normal from cell i points toward
    cell j.  Antisymmetric by construction: F(u_i, u_j, n) = -F(u_j, u_i, -n).
    """
    u_i = np.asarray(u_i, dtype=float)
    u_j = np.asarray(u_j, dtype=float)
    f_i = closure.evaluate(u_i[None, :]).f_nodes[0]
    f_j = closure.evaluate(u_j[None, :]).f_nodes[0]
    order = u_i.size - 1
    m = basis_matrix(order, rule.nodes)
    vn = rule.nodes * float(n_ij)
    upwinded = np.where(vn > 0, f_i, f_j)
    return m @ (rule.weights * vn * upwinded)


def collision_moments(u, sigma_s, mom_iso=None) -> np.ndarray:
    """Moments of the isotropic scattering operator, sigma_s((u_0/2)<m> - u).

    The zeroth component vanishes identically: the constant basis
    function is a collision invariant.
    """
    u = np.asarray(u, dtype=float)
    order = u.shape[-1] - 1
    if mom_iso is None:
        k = np.arange(order + 1)
        mom_iso = np.where(k % 2 == 0, 2.0 / (k + 1.0), 0.0)
    if u.ndim == 1:
        return sigma_s * (0.5 * u[0] * mom_iso - u)
    return np.asarray(sigma_s)[:, None] * (0.5 * u[:, 0:1] * mom_iso[None, :] - u)


def _ghost_density(bc, interior_f, rule):
    if bc.kind == "reflective":
        return interior_f[::-1]
    if callable(bc.density):
        return np.broadcast_to(np.asarray(bc.density(rule.nodes), dtype=float),
                               interior_f.shape).astype(float)
    return np.full_like(interior_f, float(bc.density))


def _minmod(a, b):
    out = np.where(np.abs(a) < np.abs(b), a, b)
    return np.where(a * b > 0.0, out, 0.0)


class _MomentRhs:
    """Semi-discrete right-hand side for a moment closure on one mesh.

    reconstruction "first_order" closes the cell averages directly;
    "minmod" reconstructs the moments linearly with minmod-limited
    slopes and closes the two edge states of each cell.
    """

    def __init__(self, mesh, materials, closure, rule, order,
                 reconstruction="first_order"):
        if reconstruction not in ("first_order", "minmod"):
            raise ValueError(f"unknown reconstruction {reconstruction!r}")
        self.mesh = mesh
        self.materials = materials
        self.closure = closure
        self.rule = rule
        self.order = order
        self.reconstruction = reconstruction
        self.k_pos, self.k_neg = _flux_kernels(order, rule)
        k = np.arange(order + 1)
        self.mom_iso = np.where(k % 2 == 0, 2.0 / (k + 1.0), 0.0)

    def _edge_densities(self, U, t):
        """Left/right edge densities per cell plus the cell-entropy vector."""
        if self.reconstruction == "first_order":
            ev = self.closure.evaluate(U, t=t)
            return ev.f_nodes, ev.f_nodes, ev.entropy
        slopes = np.zeros_like(U)
        diff = np.diff(U, axis=0)
        slopes[1:-1] = _minmod(diff[:-1], diff[1:])
        left_states = U - 0.5 * slopes
        right_states = U + 0.5 * slopes
        if self.closure.positivity_floor:
            for states in (left_states, right_states):
                bad = states[:, 0] < U0_FLOOR
                states[bad, 0] = U0_FLOOR
                states[bad, 1:] = 0.0
        ev_left = self.closure.evaluate(left_states, t=t)
        ev_right = self.closure.evaluate(right_states, t=t)
        entropy = None
        if ev_left.entropy is not None:
            entropy = 0.5 * (ev_left.entropy + ev_right.entropy)
        return ev_left.f_nodes, ev_right.f_nodes, entropy

    def __call__(self, U, t):
        f_left, f_right, entropy = self._edge_densities(U, t)
        ghost_l = _ghost_density(self.mesh.left, f_left[0], self.rule)
        ghost_r = _ghost_density(self.mesh.right, f_right[-1], self.rule)
        # interface i+1/2 takes the left cell's right-edge state through K+
        # and the right cell's left-edge state through K-
        upstream = np.vstack([ghost_l[None, :], f_right])
        downstream = np.vstack([f_left, ghost_r[None, :]])
        flux = upstream @ self.k_pos + downstream @ self.k_neg
        div = (flux[1:] - flux[:-1]) / self.mesh.dx
        coll = collision_moments(U, self.materials.sigma_s, mom_iso=self.mom_iso)
        src = 0.5 * self.materials.source[:, None] * self.mom_iso[None, :]
        dudt = -div + coll + src - self.materials.sigma_a[:, None] * U
        return dudt, entropy


def _apply_floor(U, use_floor):
    """Reset emptied cells to an isotropic floor state; count the events."""
    if not use_floor:
        return 0
    low = U[:, 0] < U0_FLOOR
    count = int(np.count_nonzero(low))
    if count:
        U[low, 0] = U0_FLOOR
        U[low, 1:] = 0.0
    return count


def step_heun(state: GridState, dt, closure, materials, mesh, rule, cfl=1.0,
              reconstruction="first_order"):
    """One Heun step; returns (new state, step diagnostics dict).

    dt must satisfy the CFL bound dt <= cfl * dx (unit top speed).
    Closure failures abort the step with the failing cells attached.
    """
    if dt > cfl * mesh.dx * (1 + 1e-12):
        raise ValueError(f"dt={dt:.3e} violates CFL bound {cfl:.3g} * dx = {cfl * mesh.dx:.3e}")
    rhs = _MomentRhs(mesh, materials, closure, rule, state.U.shape[1] - 1,
                     reconstruction=reconstruction)
    return _heun_update(state, dt, rhs, closure.positivity_floor)


def _heun_update(state, dt, rhs, use_floor):
    U = state.U
    du1, entropy1 = rhs(U, state.t)
    U1 = U + dt * du1
    negatives = int(np.count_nonzero(U1[:, 0] <= 0.0)) if not use_floor else 0
    floored = _apply_floor(U1, use_floor)
    du2, _ = rhs(U1, state.t + dt)
    U2 = U1 + dt * du2
    Unew = 0.5 * (U + U2)
    if not use_floor:
        negatives += int(np.count_nonzero(Unew[:, 0] <= 0.0))
    floored += _apply_floor(Unew, use_floor)
    new_state = GridState(U=Unew, t=state.t + dt, step=state.step + 1)
    diag = {
        "entropy": None if entropy1 is None else float(np.sum(entropy1)),
        "floor_events": floored,
        "negative_cells": negatives,
    }
    return new_state, diag


# ---------------------------------------------------------------------------
# run loops
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    """Snapshot series and physics diagnostics of one transport run."""

    case: str
    closure_name: str
    system_size: int
    x: np.ndarray
    snapshots: list            # [(t, U copy)]
    mass_trace: np.ndarray
    entropy_trace: np.ndarray | None
    dt: float
    n_steps: int
    floor_events: int
    negative_cells: int
    wall_time: float
    e_rel: float | None = None
    final_ordinates: np.ndarray | None = None

    @property
    def final_u0(self) -> np.ndarray:
        return self.snapshots[-1][1][:, 0]

    def diagnostics(self) -> dict:
        return {
            "case": self.case,
            "closure": self.closure_name,
            "system_size": self.system_size,
            "dt": self.dt,
            "n_steps": self.n_steps,
            "mass_trace": self.mass_trace.tolist(),
            "entropy_trace": None if self.entropy_trace is None else self.entropy_trace.tolist(),
            "floor_events": self.floor_events,
            "negative_cells": self.negative_cells,
            "closure_failures": 0,
            "wall_time": self.wall_time,
            "e_rel": self.e_rel,
        }


def _snapshot_steps(n_steps, n_snapshots):
    if n_snapshots <= 1:
        return {n_steps}
    return set(np.round(np.linspace(0, n_steps, n_snapshots)).astype(int).tolist())


def run_transport(mesh, materials, closure, U0, t_final, dt=None, cfl=1.0,
                  n_snapshots=5, rule=None, case="custom",
                  reconstruction="first_order") -> RunResult:
    """Advance a moment closure to t_final and collect diagnostics.

    If dt is not given it is set to cfl * dx and then shrunk so that
    t_final is hit exactly.  The entropy trace reuses the first-stage
    closure evaluation of each step, so it costs nothing extra.
    """
    rule = build_rule(DEFAULT_ORDER) if rule is None else rule
    order = U0.shape[1] - 1
    if dt is None:
        dt = cfl * mesh.dx
    n_steps = max(1, math.ceil(t_final / dt - 1e-12))
    dt = t_final / n_steps
    closure.reset()
    rhs = _MomentRhs(mesh, materials, closure, rule, order,
                     reconstruction=reconstruction)

    state = GridState(U=U0.copy())
    snap_at = _snapshot_steps(n_steps, n_snapshots)
    snapshots = [(0.0, state.U.copy())] if 0 in snap_at else []
    mass = [float(np.sum(state.U[:, 0]) * mesh.dx)]
    entropy = []
    t0 = time.perf_counter()
    floor_events = 0
    negative_cells = 0
    for _ in range(n_steps):
        state, diag = _heun_update(state, dt, rhs, closure.positivity_floor)
        if diag["entropy"] is not None:
            entropy.append(diag["entropy"] * mesh.dx)
        floor_events += diag["floor_events"]
        negative_cells += diag["negative_cells"]
        mass.append(float(np.sum(state.U[:, 0]) * mesh.dx))
        if state.step in snap_at:
            snapshots.append((state.t, state.U.copy()))
    if diag["entropy"] is not None:
        _, final_entropy = rhs(state.U, state.t)
        entropy.append(float(np.sum(final_entropy)) * mesh.dx)
    wall = time.perf_counter() - t0
    return RunResult(
        case=case,
        closure_name=closure.name,
        system_size=order + 1,
        x=mesh.centers,
        snapshots=snapshots,
        mass_trace=np.asarray(mass),
        entropy_trace=np.asarray(entropy) if entropy else None,
        dt=dt,
        n_steps=n_steps,
        floor_events=floor_events,
        negative_cells=negative_cells,
        wall_time=wall,
    )


def run_sn_transport(mesh, materials, sn_order, f0, t_final, dt=None, cfl=1.0,
                     n_snapshots=5, moment_order=3, case="custom") -> RunResult:
    """Discrete-ordinates reference: per-ordinate upwind transport.

    f0 is (n_cells, sn_order) at the Gauss-Legendre ordinates; moments
    up to `moment_order` are extracted at snapshot times for comparison
    against the closure runs.
    """
    if sn_order < 4:
        raise ValueError("ordinate count must be >= 4")
    rule = build_rule(sn_order)
    v = rule.nodes
    wq = rule.weights
    m = basis_matrix(moment_order, v)
    if dt is None:
        dt = cfl * mesh.dx
    n_steps = max(1, math.ceil(t_final / dt - 1e-12))
    dt = t_final / n_steps
    pos = v > 0
    dx = mesh.dx

    def ghost(bc, f_edge):
        if bc.kind == "reflective":
            return f_edge[::-1]
        if callable(bc.density):
            return np.asarray(bc.density(v), dtype=float) * np.ones_like(f_edge)
        return np.full_like(f_edge, float(bc.density))

    def rhs(f, t):
        gl = ghost(mesh.left, f[0])
        gr = ghost(mesh.right, f[-1])
        f_ext = np.vstack([gl[None, :], f, gr[None, :]])
        upw = np.where(pos[None, :], f_ext[:-1], f_ext[1:])   # interface values
        dflux = (upw[1:] - upw[:-1]) * v[None, :] / dx
        phi = f @ wq                                          # <f> per cell
        coll = materials.sigma_s[:, None] * (0.5 * phi[:, None] - f)
        return -dflux + coll - materials.sigma_a[:, None] * f + 0.5 * materials.source[:, None]

    def moments(f):
        return (f * wq) @ m.T

    f = f0.copy()
    snap_at = _snapshot_steps(n_steps, n_snapshots)
    snapshots = [(0.0, moments(f))] if 0 in snap_at else []
    mass = [float(np.sum(moments(f)[:, 0]) * dx)]
    t0 = time.perf_counter()
    t = 0.0
    for step in range(1, n_steps + 1):
        k1 = rhs(f, t)
        f1 = f + dt * k1
        k2 = rhs(f1, t + dt)
        f = 0.5 * (f + f1 + dt * k2)
        t = step * dt
        mass.append(float(np.sum(moments(f)[:, 0]) * dx))
        if step in snap_at:
            snapshots.append((t, moments(f)))
    wall = time.perf_counter() - t0
    return RunResult(
        case=case,
        closure_name=f"s{sn_order}",
        system_size=sn_order,
        x=mesh.centers,
        snapshots=snapshots,
        mass_trace=np.asarray(mass),
        entropy_trace=None,
        dt=dt,
        n_steps=n_steps,
        floor_events=0,
        negative_cells=0,
        wall_time=wall,
        final_ordinates=f,
    )


# ---------------------------------------------------------------------------
# cases
# ---------------------------------------------------------------------------

PLANE_SOURCE_WIDTH = 0.0032   # Gaussian scale of the initial pulse
PLANE_SOURCE_FLOOR = 1e-4

CASE_DEFAULTS = {
    "plane_source": {"cfl": 0.3, "t_final": 0.75, "n_cells": 200},
    "two_material_slab": {"cfl": 0.2, "t_final": 2.0, "n_cells": 200},
}

# 1D stand-in for the shielded multi-material benchmark: an isotropic
# unit inflow on the left crosses a thin medium, a strong scatterer, a
# half-absorbing block, and a strongly absorbing wall.
SLAB_SEGMENTS = [
    (0.00, 0.30, 0.1, 0.0),
    (0.30, 0.55, 95.0, 5.0),
    (0.55, 0.70, 50.0, 50.0),
    (0.70, 1.01, 90.0, 10.0),
]


def plane_source_density(x):
    c = PLANE_SOURCE_WIDTH
    eps = PLANE_SOURCE_FLOOR
    profile = np.exp(-np.asarray(x) ** 2 / (4.0 * math.pi * eps)) / (4.0 * math.pi * c)
    return np.maximum(eps, profile)


def build_case(case, order, n_cells=None):
    """Mesh, materials, and isotropic initial moments for a named case."""
    if case not in CASE_DEFAULTS:
        raise ValueError(f"unknown case {case!r}; choose from {sorted(CASE_DEFAULTS)}")
    defaults = CASE_DEFAULTS[case]
    n_cells = defaults["n_cells"] if n_cells is None else n_cells
    if case == "plane_source":
        mesh = Mesh1D(n_cells, -1.0, 1.0)
        materials = MaterialField.uniform(n_cells, sigma_s=1.0, sigma_a=0.0)
        u0 = plane_source_density(mesh.centers)
    else:
        mesh = Mesh1D(
            n_cells, 0.0, 1.0,
            left=BoundaryCondition("dirichlet", 1.0),
            right=BoundaryCondition("dirichlet", 0.0),
        )
        materials = MaterialField.piecewise(mesh, SLAB_SEGMENTS)
        u0 = np.full(n_cells, 1e-4)
    U0 = np.zeros((n_cells, order + 1))
    k = np.arange(order + 1)
    iso = np.where(k % 2 == 0, 1.0 / (k + 1.0), 0.0)   # moments of f = u0/2
    U0[:] = u0[:, None] * iso[None, :]
    return mesh, materials, U0, defaults


def run_case(case, closure_kind, order, gamma=0.0, trained=None, n_cells=None,
             cfl=None, t_final=None, quad_order=DEFAULT_ORDER, sn_order=64,
             n_snapshots=5, newton=None) -> RunResult:
    """Build a named case and run it with the requested closure.

    closure_kind is one of pn / mn_newton / mn_network / sn.
    """
    mesh, materials, U0, defaults = build_case(case, order, n_cells)
    cfl = defaults["cfl"] if cfl is None else cfl
    t_final = defaults["t_final"] if t_final is None else t_final
    if closure_kind == "sn":
        f0 = U0[:, 0][:, None] / 2.0 * np.ones((1, sn_order))
        result = run_sn_transport(
            mesh, materials, sn_order, f0, t_final, cfl=cfl,
            n_snapshots=n_snapshots, moment_order=order, case=case,
        )
        return result
    rule = build_rule(quad_order)
    closure = make_closure(closure_kind, order, rule, gamma=gamma, trained=trained,
                           newton=newton)
    return run_transport(
        mesh, materials, closure, U0, t_final, cfl=cfl,
        n_snapshots=n_snapshots, rule=rule, case=case,
    )


def solve_sn(case, sn_order=64, moment_order=3, n_cells=None, cfl=None,
             t_final=None, n_snapshots=5) -> RunResult:
    """Discrete-ordinates reference run of a named case.

    Convenience wrapper around `run_case(..., "sn", ...)`; moments up to
    `moment_order` are extracted at the snapshots for comparison.
    """
    return run_case(case, "sn", moment_order, n_cells=n_cells, cfl=cfl,
                    t_final=t_final, sn_order=sn_order, n_snapshots=n_snapshots)


def e_rel(u0_num, u0_ref) -> float:
    """Integrated relative error of the zeroth moment against a reference.

    int |ref - num| dx / int |ref| dx on a common grid.  A reference on
    a grid finer by an integer factor is restricted conservatively by
    block averaging.
    """
    num = np.asarray(u0_num, dtype=float)
    ref = np.asarray(u0_ref, dtype=float)
    if ref.size != num.size:
        if ref.size % num.size == 0:
            ref = ref.reshape(num.size, -1).mean(axis=1)
        elif num.size % ref.size == 0:
            num = num.reshape(ref.size, -1).mean(axis=1)
        else:
            raise ValueError(
                f"grids of sizes {num.size} and {ref.size} are not integer-ratio compatible"
            )
    denom = float(np.sum(np.abs(ref)))
    if denom == 0.0:
        raise ValueError("reference field has zero norm")
    return float(np.sum(np.abs(ref - num)) / denom)
