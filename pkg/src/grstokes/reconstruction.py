"""Divergence-conforming reconstruction of Bernardi-Raugel fields.

The operator maps a velocity with elementwise-mean-free divergence onto a
weakly divergence-free H(div) field, restoring the L2 orthogonality against
arbitrary gradients that plain conforming elements lack.  Two variants are
provided: the default matches both face moments (the lowest-order
Brezzi-Douglas-Marini interpolant, elementwise P1) and a cheaper one that
matches only mean fluxes (lowest-order Raviart-Thomas).  The identity kind
reproduces the input field and yields the classical scheme.

Reconstructed fields are kept element-local; no global H(div) dof vector is
stored since the operator only ever appears inside integrals.
"""

from __future__ import annotations

import enum

import numpy as np

from .autodiff import Dual, value
from .quadrature import FACE_RULE, VOLUME_RULE


class ReconstructionKind(enum.Enum):
    IDENTITY = "identity"
    RT0 = "rt0"
    BDM1 = "bdm1"


class ReconstructionError(RuntimeError):
    """Raised when a local moment system is numerically singular."""


def _face_geometry(mesh):
    """Per-triangle endpoints, normals and signs of the three local faces."""
    f = mesh.tri_faces  # (nt, 3)
    ends = mesh.faces[f]  # (nt, 3, 2) node ids, lower first
    a = mesh.nodes[ends[..., 0]]  # (nt, 3, 2)
    b = mesh.nodes[ends[..., 1]]
    normal = mesh.face_normal[f]  # (nt, 3, 2) global normals
    length = mesh.face_length[f]
    return ends, a, b, normal, length


def local_reconstruction_operators(space, kind):
    """Element matrices R mapping local BR coefficients to local P1 fields.

    The local field is ``w(x) = a + G (x - x_T)`` with coefficient order
    ``(a_x, a_y, G_xx, G_xy, G_yx, G_yy)``; R has shape (nt, 6, 9).
    """
    mesh = space.mesh
    nt = mesh.num_triangles
    if kind is ReconstructionKind.IDENTITY:
        raise ValueError("identity reconstruction has no local P1 representation")

    ends, a, b, normal, length = _face_geometry(mesh)
    s, w = FACE_RULE
    # quadrature points of each local face: (nt, 3, nq, 2)
    pts = a[:, :, None, :] + s[None, None, :, None] * (b - a)[:, :, None, :]
    xT = mesh.tri_centroid  # (nt, 2)

    # trace values of the 9 local basis functions at the face points
    bary = _barycentric_on_faces(mesh)  # (nt, 3, nq, 3)
    basis_n = _basis_normal_trace(space, bary, normal)  # (nt, 3, nq, 9)

    if kind is ReconstructionKind.BDM1:
        # moments: for each face, against q in {1, s}
        q1 = np.ones_like(s)
        mom = np.empty((nt, 6, 9))
        rows = np.empty((nt, 6, 6))
        for m in range(3):
            for iq, q in enumerate((q1, s)):
                r = 2 * m + iq
                wq = (w * q)[None, :, None] * length[:, m, None, None]
                mom[:, r, :] = (basis_n[:, m] * wq).sum(axis=1)
                # moments of the P1 monomials (1, x-xT, y-yT) per component
                rel = pts[:, m] - xT[:, None, :]  # (nt, nq, 2)
                for comp in range(2):
                    nc = normal[:, m, comp][:, None]
                    mono = np.stack(
                        [np.ones_like(rel[..., 0]), rel[..., 0], rel[..., 1]], axis=-1
                    )  # (nt, nq, 3)
                    rows[:, r, 3 * comp : 3 * comp + 3] = (
                        mono * (w * q)[None, :, None] * nc[..., None]
                    ).sum(axis=1) * length[:, m, None]
        # reorder monomial coefficients (a_x, b_xx, b_xy, a_y, b_yx, b_yy)
        # -> (a_x, a_y, G_xx, G_xy, G_yx, G_yy)
        perm = np.array([0, 3, 1, 2, 4, 5])
        rcond = 1.0 / np.linalg.cond(rows)
        if np.any(rcond < 1e-8):
            raise ReconstructionError(
                f"BDM1 moment matrix nearly singular (rcond {rcond.min():.2e})"
            )
        sol = np.linalg.solve(rows, mom)  # (nt, 6, 9) in monomial order
        return _permute_rows(sol, perm)

    if kind is ReconstructionKind.RT0:
        sign = space.mesh.tri_face_sign  # (nt, 3)
        flux = np.empty((nt, 3, 9))
        for m in range(3):
            wq = w[None, :, None] * length[:, m, None, None]
            flux[:, m, :] = (basis_n[:, m] * wq).sum(axis=1) * sign[:, m, None]
        area = mesh.tri_area
        xF = mesh.face_midpoint[mesh.tri_faces]  # (nt, 3, 2)
        c = flux.sum(axis=1) / area[:, None]  # (nt, 9) elementwise divergence
        aT = np.einsum("tmb,tmd->tdb", flux, xF - xT[:, None, :]) / area[:, None, None]
        R = np.zeros((nt, 6, 9))
        R[:, 0, :] = aT[:, 0, :]
        R[:, 1, :] = aT[:, 1, :]
        R[:, 2, :] = 0.5 * c
        R[:, 5, :] = 0.5 * c
        return R

    raise ValueError(f"unsupported kind {kind}")


def _permute_rows(sol, perm):
    out = np.empty_like(sol)
    for new_row, old_row in enumerate(perm):
        out[:, new_row, :] = sol[:, old_row, :]
    return out


def _barycentric_on_faces(mesh):
    """Barycentric coordinates of the 2-point face rule on all local faces."""
    nt = mesh.num_triangles
    s, _ = FACE_RULE
    nq = len(s)
    bary = np.zeros((nt, 3, nq, 3))
    ends = mesh.faces[mesh.tri_faces]  # (nt, 3, 2)
    tris = mesh.triangles
    for m in range(3):
        for e, weight in ((0, 1.0 - s), (1, s)):
            node = ends[:, m, e]  # global node id of this face endpoint
            for k in range(3):
                hit = tris[:, k] == node
                bary[hit, m, :, k] += weight
    return bary


def _basis_normal_trace(space, bary, normal):
    """Normal trace of the 9 local basis functions at face points.

    ``bary`` has shape (nt, 3, nq, 3); returns (nt, 3, nq, 9).
    """
    mesh = space.mesh
    nt = mesh.num_triangles
    nq = bary.shape[2]
    out = np.zeros((nt, 3, nq, 9))
    for k in range(3):
        lam = bary[..., k]  # (nt, 3, nq)
        out[..., 2 * k] = lam * normal[:, :, None, 0]
        out[..., 2 * k + 1] = lam * normal[:, :, None, 1]
    for m in range(3):
        i, j = (m + 1) % 3, (m + 2) % 3
        bub = 4.0 * bary[..., i] * bary[..., j]  # (nt, 3, nq)
        nF = mesh.face_normal[mesh.tri_faces]  # (nt, 3, 2)
        dot = (nF[:, :, None, :] * nF[:, m, None, None, :]).sum(-1)
        out[..., 6 + m] = bub * dot
    return out


class ReconstructedField:
    """Element-local P1 vector field ``w(x) = a_T + G_T (x - x_T)``."""

    def __init__(self, mesh, coef):
        self.mesh = mesh
        self.coef = coef  # (nt, 6)

    def eval(self, tri, points):
        """Values at physical points; ``points`` shaped (..., 2) per triangle."""
        c = self.coef[tri]
        rel = points - self.mesh.tri_centroid[tri][..., None, :]
        a = c[..., None, 0:2]
        G = c[..., 2:6].reshape(c.shape[:-1] + (2, 2))
        return a + np.einsum("...de,...qe->...qd", G, rel)

    def divergence(self):
        """Elementwise (constant) divergence."""
        return self.coef[:, 2] + self.coef[:, 5]


class IdentityField:
    """The unmodified Bernardi-Raugel field, for the classical scheme."""

    def __init__(self, space, coeffs):
        self.space = space
        self.coeffs = np.asarray(coeffs)

    def eval(self, tri, points_bary):
        vals, _ = self.space.eval_function(self.coeffs, tri, points_bary)
        return vals


def reconstruct(kind, space, coeffs):
    """Apply the reconstruction operator to a coefficient vector."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (space.ndof,):
        raise ValueError(f"expected {space.ndof} coefficients, got {coeffs.shape}")
    if kind is ReconstructionKind.IDENTITY:
        return IdentityField(space, coeffs)
    R = local_reconstruction_operators(space, kind)
    local = space.local_coefficients(coeffs, np.arange(space.mesh.num_triangles))
    coef = np.einsum("tcl,tl->tc", R, local)
    return ReconstructedField(space.mesh, coef)


def divergence_identity_check(space, coeffs, kind):
    """Max elementwise gap between div(reconstructed) and the P0 divergence."""
    if kind is ReconstructionKind.IDENTITY:
        raise ValueError("check requires a non-identity reconstruction")
    field = reconstruct(kind, space, coeffs)
    mesh = space.mesh
    rule = VOLUME_RULE
    tris = np.arange(mesh.num_triangles)
    _, grads = space.eval_function(coeffs, tris, rule.bary)
    div = grads[..., 0, 0] + grads[..., 1, 1]  # (nt, nq)
    pi0_div = div @ rule.weights
    return float(np.max(np.abs(field.divergence() - pi0_div)))


def gradient_orthogonality_check(space, coeffs, phi, kind=ReconstructionKind.BDM1):
    """Integral of grad(phi) . (reconstructed field) over the domain.

    For discretely divergence-free coefficients this vanishes for any
    smooth ``phi``; the degree-5 volume rule makes it exact for polynomial
    ``phi`` up to degree 4.
    """
    mesh = space.mesh
    rule = VOLUME_RULE
    field = reconstruct(kind, space, coeffs)
    pts = mesh.points_from_barycentric(rule.bary)
    gx_gy = _grad_of(phi, pts[..., 0], pts[..., 1])
    tris = np.arange(mesh.num_triangles)
    vals = field.eval(tris, pts)
    integrand = gx_gy[0] * vals[..., 0] + gx_gy[1] * vals[..., 1]
    return float(((integrand @ rule.weights) * mesh.tri_area).sum())


def _grad_of(phi, x, y):
    gx = phi(Dual(x, 1.0, 0.0), Dual(y, 0.0, 1.0))
    return np.broadcast_to(value(gx.dx), x.shape), np.broadcast_to(value(gx.dy), x.shape)
