"""Equation of state and manufactured benchmark problems.

Three families on the unit square, each with a closed-form solution:

* ``convergence``: a rotating flow ``u = curl(psi)/rho`` with linear
  density, driving force computed as the exact momentum residual; used for
  mesh convergence and locking studies.
* ``limit``: the hydrostatic solution ``u = 0`` with the balancing force in
  the gravity term ``g``; as the stiffness constant grows the problem
  approaches incompressible Stokes.
* ``wellbalanced``: the same hydrostatic state with the force moved into
  the volume force ``f``, which is a pure gradient field.

All analytic callables are written in dual-compatible arithmetic so
derivatives (for forcing terms and residual checks) come from forward-mode
differentiation rather than hand-derived formulas.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .autodiff import lift1, momentum_force, value


class EquationOfState:
    """Barotropic pressure law p = c rho^gamma (isothermal for gamma = 1)."""

    def __init__(self, c, gamma=1.0):
        if c <= 0:
            raise ValueError("stiffness constant c must be positive")
        if gamma < 1:
            raise ValueError("exponent gamma must be >= 1")
        self.c = float(c)
        self.gamma = float(gamma)

    def pressure(self, rho):
        """Elementwise pressure of a density vector (rejects negatives)."""
        rho = np.asarray(rho, dtype=float)
        if np.any(rho < 0):
            raise ValueError("negative density in equation of state")
        if self.gamma == 1.0:
            return self.c * rho
        return self.c * rho ** self.gamma

    def density(self, p):
        """Inverse law rho = (p / c)^(1/gamma) for nonnegative pressures."""
        p = np.asarray(p, dtype=float)
        if np.any(p < 0):
            raise ValueError("negative pressure in inverse equation of state")
        if self.gamma == 1.0:
            return p / self.c
        return (p / self.c) ** (1.0 / self.gamma)


def eos_pressure(eos, rho):
    """Pressure update of a P0 density coefficient vector."""
    return eos.pressure(rho)


@dataclass
class ManufacturedProblem:
    """Closed-form data and solution of one benchmark configuration."""

    family: str
    mu: float
    lam: float
    eos: EquationOfState
    velocity: Callable  # (x, y) -> (u1, u2), dual-compatible
    density: Callable  # (x, y) -> rho, dual-compatible
    pressure: Callable  # (x, y) -> p, dual-compatible
    f: Optional[Callable] = None  # volume force (arrays -> arrays)
    g: Optional[Callable] = None  # gravity-type force
    mass_total: float = 1.0
    params: dict = field(default_factory=dict)

    def pde_residual(self, x, y):
        """Momentum residual -div(sigma(u)) + grad(p) - f - rho g at points."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        lhs = momentum_force(self.velocity, self.pressure, self.mu, self.lam)
        r1, r2 = lhs(x, y)
        r1 = np.broadcast_to(r1, x.shape).copy()
        r2 = np.broadcast_to(r2, x.shape).copy()
        if self.f is not None:
            f1, f2 = self.f(x, y)
            r1 -= np.broadcast_to(np.asarray(f1, dtype=float), x.shape)
            r2 -= np.broadcast_to(np.asarray(f2, dtype=float), x.shape)
        if self.g is not None:
            g1, g2 = self.g(x, y)
            rho = np.broadcast_to(np.asarray(value(self.density(x, y)), dtype=float), x.shape)
            r1 -= rho * np.broadcast_to(np.asarray(g1, dtype=float), x.shape)
            r2 -= rho * np.broadcast_to(np.asarray(g2, dtype=float), x.shape)
        return r1, r2


def _linear_density(c):
    def rho(x, y):
        return 1.0 + (y - 0.5) / c

    return rho


def convergence_family(mu=1.0, lam=None, c=1.0, gamma=1.0):
    """Rotating-flow benchmark with exact-residual forcing.

    The velocity is the curl of the biquartic bubble divided by the linear
    density, so the continuity equation holds identically; ``f`` is the
    exact momentum residual (forward-mode differentiated) and ``g = 0``.
    """
    if c <= 0.5:
        raise ValueError("need c > 1/2 to keep the density positive")
    if lam is None:
        lam = -2.0 * mu / 3.0
    eos = EquationOfState(c, gamma)
    rho = _linear_density(c)

    def stream(x, y):
        return (x * x) * (x - 1.0) ** 2 * (y * y) * (y - 1.0) ** 2

    def velocity(x, y):
        from .autodiff import Dual

        psi = stream(Dual(x, 1.0, 0.0), Dual(y, 0.0, 1.0))
        r = rho(x, y)
        return psi.dy / r, -psi.dx / r

    def pressure(x, y):
        return eos.c * rho(x, y) ** gamma

    force = momentum_force(velocity, pressure, mu, lam)

    return ManufacturedProblem(
        family="convergence",
        mu=mu,
        lam=lam,
        eos=eos,
        velocity=velocity,
        density=rho,
        pressure=pressure,
        f=force,
        g=None,
        params={"mu": mu, "lambda": lam, "c": c, "gamma": gamma},
    )


def limit_family(c=1.0, gamma=1.0):
    """Hydrostatic state driven through the gravity term (mu=1, lam=-2/3)."""
    if c < 1:
        raise ValueError("limit family expects c >= 1")
    mu, lam = 1.0, -2.0 / 3.0
    eos = EquationOfState(c, gamma)
    rho = _linear_density(c)

    def velocity(x, y):
        zero = x * 0.0
        return zero, y * 0.0

    def pressure(x, y):
        return eos.c * rho(x, y) ** gamma

    def gravity(x, y):
        r = rho(x, y)
        return np.zeros_like(np.asarray(x, dtype=float)), gamma * value(r ** (gamma - 2.0))

    return ManufacturedProblem(
        family="limit",
        mu=mu,
        lam=lam,
        eos=eos,
        velocity=velocity,
        density=rho,
        pressure=pressure,
        f=None,
        g=gravity,
        params={"mu": mu, "lambda": lam, "c": c, "gamma": gamma},
    )


def wellbalanced_family(c=1.0, gamma=1.0):
    """Hydrostatic state driven by the gradient force f = grad(p), g = 0."""
    if c < 1:
        raise ValueError("well-balanced family expects c >= 1")
    mu, lam = 1.0, -2.0 / 3.0
    eos = EquationOfState(c, gamma)
    rho = _linear_density(c)

    def velocity(x, y):
        return x * 0.0, y * 0.0

    def pressure(x, y):
        return eos.c * rho(x, y) ** gamma

    def force(x, y):
        r = rho(x, y)
        return np.zeros_like(np.asarray(x, dtype=float)), gamma * value(r ** (gamma - 1.0))

    return ManufacturedProblem(
        family="wellbalanced",
        mu=mu,
        lam=lam,
        eos=eos,
        velocity=velocity,
        density=rho,
        pressure=pressure,
        f=force,
        g=None,
        params={"mu": mu, "lambda": lam, "c": c, "gamma": gamma},
    )


FAMILIES = {
    "convergence": convergence_family,
    "limit": limit_family,
    "wellbalanced": wellbalanced_family,
}
