"""Error norms, empirical convergence orders and table output."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .autodiff import Dual, value
from .quadrature import VOLUME_RULE


@dataclass
class ErrorReport:
    """Discretization errors of one solve against the exact solution."""

    ndof: int  # ansatz-space size 2|T| + |N| + |E| (boundary included)
    ndof_true: int  # actual unknowns after Dirichlet elimination
    h: float
    l2_u: float
    h1_u: float
    l2_rho: float
    iterations: int
    converged: bool
    scheme: str
    stability_ratio: float = 0.0

    def __post_init__(self):
        for name in ("l2_u", "h1_u", "l2_rho"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")


@dataclass
class ConvergenceTable:
    """Reports over a refinement sequence plus dyadic rates per column."""

    reports: List[ErrorReport]

    def __post_init__(self):
        ndofs = [r.ndof for r in self.reports]
        if any(b <= a for a, b in zip(ndofs, ndofs[1:])):
            raise ValueError("reports must have strictly increasing ndof")

    def rates(self, column):
        return dyadic_rate([getattr(r, column) for r in self.reports])


def error_norms(space, state, problem, scheme="modified"):
    """L2/H1 velocity errors and L2 density error by degree-5 quadrature."""
    mesh = space.mesh
    rule = VOLUME_RULE
    tris = np.arange(mesh.num_triangles)
    pts = mesh.points_from_barycentric(rule.bary)
    x, y = pts[..., 0], pts[..., 1]

    uh, guh = space.eval_function(np.asarray(state.u, dtype=float), tris, rule.bary)
    X, Y = Dual(x, 1.0, 0.0), Dual(y, 0.0, 1.0)
    u1d, u2d = problem.velocity(X, Y)
    shape = x.shape
    ue = np.stack(
        [np.broadcast_to(value(u1d), shape), np.broadcast_to(value(u2d), shape)], axis=-1
    )
    gue = np.empty(shape + (2, 2))
    gue[..., 0, 0] = np.broadcast_to(value(u1d.dx), shape)
    gue[..., 0, 1] = np.broadcast_to(value(u1d.dy), shape)
    gue[..., 1, 0] = np.broadcast_to(value(u2d.dx), shape)
    gue[..., 1, 1] = np.broadcast_to(value(u2d.dy), shape)

    wA = rule.weights
    areas = mesh.tri_area
    l2u2 = ((((uh - ue) ** 2).sum(-1)) @ wA * areas).sum()
    h1u2 = ((((guh - gue) ** 2).sum((-2, -1))) @ wA * areas).sum()
    rho_e = np.broadcast_to(np.asarray(value(problem.density(x, y)), dtype=float), shape)
    l2rho2 = (((rho_e - np.asarray(state.rho)[:, None]) ** 2) @ wA * areas).sum()

    mesh_ndof = 2 * mesh.num_triangles + mesh.num_nodes + mesh.num_faces
    return ErrorReport(
        ndof=mesh_ndof,
        ndof_true=space.ndof + mesh.num_triangles,
        h=mesh.h_max,
        l2_u=float(np.sqrt(l2u2)),
        h1_u=float(np.sqrt(h1u2)),
        l2_rho=float(np.sqrt(l2rho2)),
        iterations=getattr(state, "iterations", 0),
        converged=getattr(state, "converged", True),
        scheme=scheme,
        stability_ratio=getattr(state, "stability_ratio", 0.0),
    )


def dyadic_rate(errors):
    """Orders log2(e_{k-1}/e_k) for an h-halving sequence; None if undefined."""
    if len(errors) < 2:
        raise ValueError("need at least two errors for a rate")
    rates = []
    for prev, cur in zip(errors, errors[1:]):
        if prev <= 0 or cur <= 0:
            rates.append(None)
        else:
            rates.append(math.log2(prev / cur))
    return rates


_CSV_HEADER = "ndof,L2u,rateL2u,H1u,rateH1u,L2rho,rateL2rho,iters,converged,scheme"


def _sci(v):
    return f"{v:.5e}"


def emit_table(table, path, header_comments=()):
    """Write a convergence table as CSV with per-column dyadic rates."""
    if not table.reports:
        raise ValueError("cannot emit an empty table")
    rows = table.reports
    rate_cols = {}
    for col in ("l2_u", "h1_u", "l2_rho"):
        if len(rows) >= 2:
            rate_cols[col] = [None] + table.rates(col)
        else:
            rate_cols[col] = [None]
    lines = []
    for comment in header_comments:
        lines.append(f"# {comment}")
    lines.append(_CSV_HEADER)
    for k, r in enumerate(rows):
        cells = [str(r.ndof)]
        for col in ("l2_u", "h1_u", "l2_rho"):
            cells.append(_sci(getattr(r, col)))
            rate = rate_cols[col][k]
            cells.append("" if rate is None else f"{rate:.4f}")
        cells += [str(r.iterations), "1" if r.converged else "0", r.scheme]
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return path


def read_table(path):
    """Parse a CSV written by emit_table into a list of row dictionaries."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("ndof,"):
                continue
            parts = line.split(",")
            rows.append(
                {
                    "ndof": int(parts[0]),
                    "L2u": float(parts[1]),
                    "rateL2u": None if parts[2] == "" else float(parts[2]),
                    "H1u": float(parts[3]),
                    "rateH1u": None if parts[4] == "" else float(parts[4]),
                    "L2rho": float(parts[5]),
                    "rateL2rho": None if parts[6] == "" else float(parts[6]),
                    "iters": int(parts[7]),
                    "converged": parts[8] == "1",
                    "scheme": parts[9],
                }
            )
    return rows
