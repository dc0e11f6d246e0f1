"""Linear solves and the density-velocity fixed-point iteration.

The algorithm starts from an incompressible Stokes solve with constant
density, turns the resulting pressure into a hydrostatically balanced
initial density (exact inversion of the equation of state plus a mass
constant), and then alternates a backward-Euler pseudo-time step for the
density, the pressure update, and a momentum solve until the combined
residual falls below tolerance.

All linear systems use sparse direct LU factorizations; the momentum
operator is factorized once per run.  The zero-mean pressure constraint of
the initial solve is enforced through one extra Lagrange multiplier rather
than by pinning a degree of freedom.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from .assembly import (
    assemble_a1,
    assemble_a2,
    assemble_b,
    assemble_face_flux_operator,
    assemble_force_functional,
    assemble_gravity_matrix,
    assemble_p0_mass,
    assemble_upwind,
)
from .fespace import BRSpace, P0Space
from .quadrature import RHS_RULE, VOLUME_RULE
from .reconstruction import ReconstructionKind

logger = logging.getLogger("grstokes.solver")


class SolverError(RuntimeError):
    """Raised on linear solver breakdown or violated solver invariants."""


@dataclass
class RunConfig:
    """Physical and algorithmic parameters of one solve."""

    mu: float = 1.0
    lam: float = -2.0 / 3.0
    c: float = 1.0
    gamma: float = 1.0
    mass_total: float = 1.0
    tau: Optional[float] = None  # defaults to mu / c
    tol: float = 1e-11
    max_iters: int = 5000
    kind: ReconstructionKind = ReconstructionKind.BDM1
    adapt_tau: bool = True

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.lam <= -2.0 * self.mu:
            raise ValueError("lambda must satisfy lambda > -2 mu")
        if self.c <= 0:
            raise ValueError("c must be positive")
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if self.tau is not None and self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")

    @property
    def tau_default(self):
        return self.mu / self.c if self.tau is None else self.tau


@dataclass
class State:
    """Discrete solution triplet with iteration diagnostics."""

    u: np.ndarray
    p: np.ndarray
    rho: np.ndarray
    iterations: int
    residual_history: List[float] = field(default_factory=list)
    converged: bool = False
    mass: float = 0.0
    min_density: float = 0.0
    tau_final: float = 0.0
    stability_ratio: float = 0.0


class DiscreteOperators:
    """All assembled operators of one (mesh, scheme, problem) combination."""

    def __init__(self, mesh, problem, kind):
        self.mesh = mesh
        self.kind = kind
        self.space = BRSpace(mesh)
        self.p0 = P0Space(mesh)
        self.A1 = assemble_a1(self.space, problem.mu)
        self.A2 = assemble_a2(self.space, kind, problem.lam)
        self.B = assemble_b(self.space, self.p0)
        self.M = assemble_p0_mass(mesh)
        self.flux_op = assemble_face_flux_operator(self.space)
        self.F = assemble_force_functional(self.space, kind, problem.f)
        self.W = assemble_gravity_matrix(self.space, kind, problem.g)
        self.areas = mesh.tri_area
        self._momentum_lu = None
        self._saddle_lu = None

    @property
    def momentum_lu(self):
        if self._momentum_lu is None:
            A = (self.A1 + self.A2).tocsc()
            try:
                self._momentum_lu = spla.splu(A)
            except RuntimeError as exc:  # pragma: no cover - config guarded
                raise SolverError(f"momentum operator factorization failed: {exc}")
        return self._momentum_lu

    @property
    def saddle_lu(self):
        """LU of the augmented Stokes matrix [[A1 B^T 0],[B 0 m],[0 m^T 0]]."""
        if self._saddle_lu is None:
            m = sp.csr_matrix(self.areas[:, None])
            K = sp.bmat(
                [
                    [self.A1, self.B.T, None],
                    [self.B, None, m],
                    [None, m.T, None],
                ],
                format="csc",
            )
            try:
                self._saddle_lu = spla.splu(K)
            except RuntimeError as exc:
                raise SolverError(f"saddle-point factorization failed: {exc}")
        return self._saddle_lu

    def momentum_rhs(self, rho, p):
        return self.F + self.W @ rho - self.B.T @ p

    def momentum_residual(self, u, rho, p):
        r = (self.A1 + self.A2) @ u + self.B.T @ p - self.F - self.W @ rho
        return float(np.linalg.norm(r))

    def h1_seminorm(self, u):
        """L2 norm of the velocity gradient (exact quadrature)."""
        rule = VOLUME_RULE
        tris = np.arange(self.mesh.num_triangles)
        _, grads = self.space.eval_function(np.asarray(u, dtype=float), tris, rule.bary)
        dens = (grads ** 2).sum(axis=(-2, -1))
        return float(np.sqrt(((dens @ rule.weights) * self.areas).sum()))


def solve_incompressible_stokes(ops, rho_const):
    """Initial Stokes solve: momentum with density ``rho_const``, div_h u = 0.

    Returns the velocity and the zero-mean P0 pressure.
    """
    nu, nt = ops.space.ndof, ops.mesh.num_triangles
    rhs = np.zeros(nu + nt + 1)
    rhs[:nu] = ops.F + ops.W @ np.full(nt, rho_const)
    sol = ops.saddle_lu.solve(rhs)
    if not np.all(np.isfinite(sol)):
        raise SolverError("singular saddle-point system in the initial solve")
    return sol[:nu], sol[nu : nu + nt]


def discrete_divfree_projection(ops, u):
    """Component of ``u`` in the discretely divergence-free subspace.

    The splitting is orthogonal in the viscous inner product, so the
    projection solves the same augmented saddle system as the initial step
    with right-hand side ``A1 u``.
    """
    nu, nt = ops.space.ndof, ops.mesh.num_triangles
    rhs = np.zeros(nu + nt + 1)
    rhs[:nu] = ops.A1 @ np.asarray(u, dtype=float)
    sol = ops.saddle_lu.solve(rhs)
    return sol[:nu]


def wellbalanced_init(p0, eos, mass_total, areas):
    """Balanced initial density from the initial pressure, or None.

    Inverts the equation of state with an additive pressure constant chosen
    so the density carries the prescribed total mass and stays nonnegative:
    for the isothermal law this is exactly ``rho0 = p0/c + M/|Omega|``.
    Returns None when no admissible constant exists (fallback to the
    constant density).
    """
    p0 = np.asarray(p0, dtype=float)
    area_total = float(areas.sum())
    if eos.gamma == 1.0:
        rho0 = p0 / eos.c + mass_total / area_total
        if rho0.min() < 0:
            return None
        return rho0

    kappa_min = -float(p0.min())

    def mass_of(kappa):
        return float(areas @ eos.density(np.maximum(p0 + kappa, 0.0)))

    if mass_of(kappa_min) > mass_total:
        return None
    hi = kappa_min + eos.c * (mass_total / area_total) ** eos.gamma + 1.0
    while mass_of(hi) < mass_total:
        hi = kappa_min + 2.0 * (hi - kappa_min) + 1.0
    kappa = brentq(
        lambda k: mass_of(k) - mass_total, kappa_min, hi, xtol=1e-15, rtol=8.9e-16
    )
    return eos.density(np.maximum(p0 + kappa, 0.0))


def density_increment(mass_matrix, upwind, rho_prev, tau):
    """Increment of the backward-Euler density update.

    Solves ``(M + tau D) delta = -tau D rho_prev``; the update
    ``rho_prev + delta`` equals the direct solve of
    ``(M + tau D) rho = M rho_prev`` in exact arithmetic but keeps the
    steady-state defect at rounding level instead of flooring at eps/tau.
    """
    rho_prev = np.asarray(rho_prev, dtype=float)
    A = (mass_matrix + tau * upwind.flux_form).tocsc()
    delta = spla.splu(A).solve(-tau * (upwind.flux_form @ rho_prev))
    if not np.all(np.isfinite(delta)):
        raise SolverError("density step produced non-finite values")
    return delta


def density_step(mass_matrix, upwind, rho_prev, tau):
    """Backward-Euler density update ``(M + tau D) rho = M rho_prev``.

    The system matrix is an M-matrix for any positive step size, so the
    update preserves nonnegativity and the weighted mass exactly.
    """
    rho_prev = np.asarray(rho_prev, dtype=float)
    rho = rho_prev + density_increment(mass_matrix, upwind, rho_prev, tau)
    floor = -1e-12 * max(rho_prev.max(initial=0.0), 1.0)
    if rho.min() < floor:
        raise SolverError(f"density step lost nonnegativity (min {rho.min():.3e})")
    return np.maximum(rho, 0.0)


def momentum_step(ops, rho, p):
    """Solve the momentum system for a frozen density and pressure."""
    u = ops.momentum_lu.solve(ops.momentum_rhs(rho, p))
    if not np.all(np.isfinite(u)):
        raise SolverError("momentum solve produced non-finite values")
    return u


def _stability_ratio(ops, problem, u, rho):
    """Monitored constant of the discrete stability estimate."""
    grad_norm = ops.h1_seminorm(u)
    rule = RHS_RULE
    pts = ops.mesh.points_from_barycentric(rule.bary)
    data_norm = 0.0
    if problem.f is not None:
        fx, fy = problem.f(pts[..., 0], pts[..., 1])
        f2 = np.broadcast_to(np.asarray(fx, float), pts.shape[:2]) ** 2
        f2 = f2 + np.broadcast_to(np.asarray(fy, float), pts.shape[:2]) ** 2
        data_norm += float(np.sqrt(((f2 @ rule.weights) * ops.areas).sum()))
    if problem.g is not None:
        gx, gy = problem.g(pts[..., 0], pts[..., 1])
        gmag = np.hypot(
            np.broadcast_to(np.asarray(gx, float), pts.shape[:2]),
            np.broadcast_to(np.asarray(gy, float), pts.shape[:2]),
        )
        rho_norm = float(np.sqrt((ops.areas * rho ** 2).sum()))
        data_norm += rho_norm * float(gmag.max())
    if data_norm == 0.0:
        return 0.0
    return min(2.0 * problem.mu + problem.lam, problem.mu) * grad_norm / data_norm


def fixed_point_solve(config, problem, mesh):
    """Run the full iteration on one mesh; returns the final State."""
    if abs(config.mu - problem.mu) > 1e-14 or abs(config.lam - problem.lam) > 1e-14:
        raise ValueError("config and problem disagree on viscosity parameters")
    ops = DiscreteOperators(mesh, problem, config.kind)
    eos = problem.eos
    nt = mesh.num_triangles
    area_total = float(ops.areas.sum())
    rho_const = config.mass_total / area_total

    u, p_init = solve_incompressible_stokes(ops, rho_const)
    rho = wellbalanced_init(p_init, eos, config.mass_total, ops.areas)
    if rho is None:
        logger.info("balanced initialization infeasible; starting from constant density")
        rho = np.full(nt, rho_const)
        u = np.zeros(ops.space.ndof)
    p = eos.pressure(rho)

    tau = config.tau_default
    state = State(
        u=u,
        p=p,
        rho=rho,
        iterations=0,
        mass=float(ops.areas @ rho),
        min_density=float(rho.min()),
        tau_final=tau,
    )
    upwind = assemble_upwind(ops.space, u, ops.flux_op)
    tau_floor = tau * 2.0 ** -40
    cooldown = 0
    comp = np.zeros_like(rho)  # compensated accumulation of sub-ulp increments
    for n in range(1, config.max_iters + 1):
        delta = density_increment(ops.M, upwind, rho, tau) + comp
        rho_new = rho + delta
        comp = (rho - rho_new) + delta
        rho = rho_new
        floor = -1e-12 * max(rho.max(initial=0.0), 1.0)
        if rho.min() < floor:
            raise SolverError(f"density step lost nonnegativity (min {rho.min():.3e})")
        if rho.min() < 0.0:
            comp[rho < 0.0] = 0.0
            rho = np.maximum(rho, 0.0)
        mass = float(ops.areas @ rho)
        if abs(mass - config.mass_total) > 1e-11 * max(config.mass_total, 1.0):
            raise SolverError(f"mass drifted to {mass!r} at iteration {n}")
        p = eos.pressure(rho)
        u = momentum_step(ops, rho, p)
        upwind = assemble_upwind(ops.space, u, ops.flux_op)
        res = ops.momentum_residual(u, rho, p) + float(
            np.linalg.norm(upwind.apply_divergence(rho))
        )
        state.residual_history.append(res)
        logger.info(
            "%d %.15e %.15e %.15e", n, res, mass, float(rho.min())
        )
        state.iterations = n
        if res < config.tol:
            state.converged = True
            break
        # halve the step once the residual rises clear of its recent window
        # (sustained growth, as opposed to noise around a decaying trend)
        cooldown = max(0, cooldown - 1)
        window = state.residual_history[-6:-1]
        if (
            config.adapt_tau
            and cooldown == 0
            and len(window) == 5
            and tau > tau_floor
            and res > max(window) * (1.0 + 1e-3)
        ):
            tau = max(0.5 * tau, tau_floor)
            cooldown = 5
            logger.info("residual increasing; halving pseudo-time step to %.3e", tau)

    state.u, state.p, state.rho = u, p, rho
    state.mass = float(ops.areas @ rho)
    state.min_density = float(rho.min())
    state.tau_final = tau
    state.stability_ratio = _stability_ratio(ops, problem, u, rho)
    tail = state.residual_history[-10:]
    if state.converged and any(b > a for a, b in zip(tail, tail[1:])):
        warnings.warn("residual was not monotone over the final iterations", RuntimeWarning)
    return state
