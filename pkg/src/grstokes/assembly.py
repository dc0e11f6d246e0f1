"""Assembly of the discrete operators.

Builds the viscous stiffness, the (reconstructed) dilatation term, the
pressure-velocity coupling, right-hand-side functionals with reconstructed
test functions, the upwind finite-volume matrix of the continuity equation
and the diagonal P0 mass matrix.  Element contributions are accumulated in
triplet buffers in fixed element order, so repeated runs are
bit-reproducible.

Sign and scaling conventions:

* ``B[T, i] = -integral_T div(phi_i)``, so the pressure force enters the
  momentum system as ``B^T p`` and the discrete continuity rows read
  ``B u = 0``.
* The upwind matrix is stored in flux form: row T accumulates the signed
  face fluxes ``rho_upw * u_{T,F}`` without the 1/|T| factor.  The density
  update solves ``(M + tau D_flux) rho = M rho_prev``; dividing the flux
  form by the triangle areas gives the actual upwind divergence values.
  Column sums of the flux form vanish identically (mass conservation), and
  ``D_flux 1 / |T| = pi0 div(u)``.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .quadrature import RHS_RULE, VOLUME_RULE
from .reconstruction import ReconstructionKind, local_reconstruction_operators

N_LOCAL = 9


def _element_scatter(space, elem_mat):
    """Assemble per-element (nt, 9, 9) blocks into a CSR matrix."""
    ed = space.element_dofs
    nt = ed.shape[0]
    rows = np.repeat(ed, N_LOCAL, axis=1).ravel()
    cols = np.tile(ed, (1, N_LOCAL)).ravel()
    vals = elem_mat.reshape(nt, -1).ravel()
    keep = (rows >= 0) & (cols >= 0)
    mat = sp.coo_matrix(
        (vals[keep], (rows[keep], cols[keep])), shape=(space.ndof, space.ndof)
    )
    return mat.tocsr()


def _basis_at_volume_rule(space, rule=VOLUME_RULE):
    tris = np.arange(space.mesh.num_triangles)
    return space.eval_basis(tris, rule.bary)


def assemble_a1(space, mu):
    """Viscous form 2 mu (eps(u), eps(v)); symmetric positive definite."""
    if mu <= 0:
        raise ValueError("viscosity mu must be positive")
    rule = VOLUME_RULE
    _, grads = _basis_at_volume_rule(space, rule)
    eps = 0.5 * (grads + np.swapaxes(grads, -2, -1))  # (nt, nq, 9, 2, 2)
    elem = 2.0 * mu * np.einsum(
        "q,tqiab,tqjab,t->tij", rule.weights, eps, eps, space.mesh.tri_area
    )
    return _element_scatter(space, elem)


def assemble_a2(space, kind, lam):
    """Dilatation form of the momentum operator.

    With a reconstruction the term reduces to ``lam (div_h u, div_h v)``
    because reconstructed divergences equal the P0 divergence; the identity
    kind keeps the full divergence of the conforming basis.
    """
    rule = VOLUME_RULE
    mesh = space.mesh
    _, grads = _basis_at_volume_rule(space, rule)
    div = grads[..., 0, 0] + grads[..., 1, 1]  # (nt, nq, 9)
    if kind is ReconstructionKind.IDENTITY:
        elem = lam * np.einsum("q,tqi,tqj,t->tij", rule.weights, div, div, mesh.tri_area)
    else:
        mean_div = np.einsum("q,tqi->ti", rule.weights, div)  # pi0 of div per element
        elem = lam * np.einsum("ti,tj,t->tij", mean_div, mean_div, mesh.tri_area)
    return _element_scatter(space, elem)


def assemble_b(space, p0space):
    """Pressure coupling: row T, column i holds ``-integral_T div(phi_i)``."""
    if p0space.mesh is not space.mesh:
        raise ValueError("velocity and pressure space live on different meshes")
    rule = VOLUME_RULE
    mesh = space.mesh
    _, grads = _basis_at_volume_rule(space, rule)
    div = grads[..., 0, 0] + grads[..., 1, 1]
    elem = -np.einsum("q,tqi,t->ti", rule.weights, div, mesh.tri_area)  # (nt, 9)
    ed = space.element_dofs
    rows = np.repeat(np.arange(mesh.num_triangles), N_LOCAL)
    cols = ed.ravel()
    vals = elem.ravel()
    keep = cols >= 0
    return sp.coo_matrix(
        (vals[keep], (rows[keep], cols[keep])), shape=(mesh.num_triangles, space.ndof)
    ).tocsr()


def assemble_p0_mass(mesh):
    """Diagonal P0 mass matrix with the triangle areas."""
    return sp.diags(mesh.tri_area).tocsr()


def _reconstructed_basis_values(space, kind, rule):
    """Values of (reconstructed) local basis functions at volume rule points.

    Returns an array (nt, nq, 9, 2).  For the identity kind these are the
    plain basis values.
    """
    mesh = space.mesh
    if kind is ReconstructionKind.IDENTITY:
        values, _ = space.eval_basis(np.arange(mesh.num_triangles), rule.bary)
        return values
    R = local_reconstruction_operators(space, kind)  # (nt, 6, 9)
    pts = mesh.points_from_barycentric(rule.bary)  # (nt, nq, 2)
    rel = pts - mesh.tri_centroid[:, None, :]
    # w = a + G (x - xT); monomial basis per point: (1, relx, rely)
    mono = np.concatenate([np.ones_like(rel[..., :1]), rel], axis=-1)  # (nt, nq, 3)
    values = np.empty((mesh.num_triangles, rule.bary.shape[0], N_LOCAL, 2))
    values[..., 0] = np.einsum("tql,tlj->tqj", mono, R[:, [0, 2, 3], :])
    values[..., 1] = np.einsum("tql,tlj->tqj", mono, R[:, [1, 4, 5], :])
    return values


def assemble_force_functional(space, kind, f, rule=RHS_RULE):
    """Vector of ``integral f . (Pi phi_i)`` for the volume force ``f``."""
    mesh = space.mesh
    vec = np.zeros(space.ndof)
    if f is None:
        return vec
    values = _reconstructed_basis_values(space, kind, rule)
    pts = mesh.points_from_barycentric(rule.bary)
    fx, fy = f(pts[..., 0], pts[..., 1])
    fx = np.broadcast_to(np.asarray(fx, dtype=float), pts.shape[:2])
    fy = np.broadcast_to(np.asarray(fy, dtype=float), pts.shape[:2])
    integrand = fx[..., None] * values[..., 0] + fy[..., None] * values[..., 1]
    elem = np.einsum("q,tqi,t->ti", rule.weights, integrand, mesh.tri_area)
    ed = space.element_dofs
    keep = ed >= 0
    np.add.at(vec, ed[keep], elem[keep])
    return vec


def assemble_gravity_matrix(space, kind, g, rule=RHS_RULE):
    """Sparse map W from P0 densities to ``integral rho g . (Pi phi_i)``."""
    mesh = space.mesh
    if g is None:
        return sp.csr_matrix((space.ndof, mesh.num_triangles))
    values = _reconstructed_basis_values(space, kind, rule)
    pts = mesh.points_from_barycentric(rule.bary)
    gx, gy = g(pts[..., 0], pts[..., 1])
    gx = np.broadcast_to(np.asarray(gx, dtype=float), pts.shape[:2])
    gy = np.broadcast_to(np.asarray(gy, dtype=float), pts.shape[:2])
    integrand = gx[..., None] * values[..., 0] + gy[..., None] * values[..., 1]
    elem = np.einsum("q,tqi,t->ti", rule.weights, integrand, mesh.tri_area)
    ed = space.element_dofs
    rows = ed.ravel()
    cols = np.repeat(np.arange(mesh.num_triangles), N_LOCAL)
    keep = rows >= 0
    return sp.coo_matrix(
        (elem.ravel()[keep], (rows[keep], cols[keep])),
        shape=(space.ndof, mesh.num_triangles),
    ).tocsr()


def assemble_rhs(space, kind, f, g, rho, rule=RHS_RULE):
    """Momentum right-hand side ``F(Pi v) + G(rho, Pi v)`` as a vector."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("density must be nonnegative")
    vec = assemble_force_functional(space, kind, f, rule)
    if g is not None:
        vec = vec + assemble_gravity_matrix(space, kind, g, rule) @ rho
    return vec


def assemble_face_flux_operator(space):
    """Sparse map from velocity coefficients to face fluxes.

    Row F gives ``integral_F u . n_F ds`` with the global face normal; the
    closed form uses the endpoint values of the P1 part (trapezoid exact
    for affine traces) and ``2|F|/3`` for the face's own bubble.
    """
    mesh = space.mesh
    rows, cols, vals = [], [], []
    ends = mesh.faces
    normal = mesh.face_normal
    length = mesh.face_length
    for e in range(2):
        nd = space.node_dof[ends[:, e]]
        have = nd >= 0
        idx = np.nonzero(have)[0]
        for comp in range(2):
            rows.append(idx)
            cols.append(nd[have] + comp)
            vals.append(0.5 * length[have] * normal[have, comp])
    have = space.face_dof >= 0
    idx = np.nonzero(have)[0]
    rows.append(idx)
    cols.append(space.face_dof[have])
    vals.append(2.0 * length[have] / 3.0)
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.num_faces, space.ndof),
    ).tocsr()


class UpwindMatrix:
    """Upwind discretization of ``div(rho u)`` for a frozen velocity.

    Attributes
    ----------
    flux_form : csr_matrix (nt, nt)
        Row T accumulates ``rho_upw u_{T,F}`` face sums (no area scaling);
        this is the matrix entering the backward-Euler density step.
    fluxes : ndarray (nf,)
        Face fluxes with respect to the global normals.
    """

    def __init__(self, mesh, flux_form, fluxes):
        self.mesh = mesh
        self.flux_form = flux_form
        self.fluxes = fluxes

    def divergence_operator(self):
        """Matrix whose action gives elementwise upwind divergence values."""
        inv_area = sp.diags(1.0 / self.mesh.tri_area)
        return (inv_area @ self.flux_form).tocsr()

    def apply_divergence(self, rho):
        """Elementwise values of the upwind divergence of ``rho u``."""
        return (self.flux_form @ np.asarray(rho)) / self.mesh.tri_area


def assemble_upwind(space, u_coeffs, flux_operator=None):
    """Build the upwind matrix from a velocity coefficient vector."""
    mesh = space.mesh
    if flux_operator is None:
        flux_operator = assemble_face_flux_operator(space)
    fluxes = flux_operator @ np.asarray(u_coeffs, dtype=float)
    interior = mesh.interior_faces()
    owner = mesh.face_owner[interior]
    neighbor = mesh.face_neighbor[interior]
    q = fluxes[interior]
    qp = np.maximum(q, 0.0)   # outflow from the owner
    qm = np.maximum(-q, 0.0)  # outflow from the neighbor
    rows = np.concatenate([owner, owner, neighbor, neighbor])
    cols = np.concatenate([owner, neighbor, neighbor, owner])
    vals = np.concatenate([qp, -qm, qm, -qp])
    nt = mesh.num_triangles
    flux_form = sp.coo_matrix((vals, (rows, cols)), shape=(nt, nt)).tocsr()
    return UpwindMatrix(mesh, flux_form, fluxes)


# -- convexity/jump diagnostic ------------------------------------------------


class PhiSquared:
    """phi(s) = s^2; the Taylor mean value is the midpoint."""

    def __call__(self, s):
        return s * s

    def prime(self, s):
        return 2.0 * s

    def second(self, s):
        return 2.0 * np.ones_like(s)

    def mean_value(self, x, y):
        return 0.5 * (x + y)


class PhiSLogS:
    """phi(s) = s log s on positive densities.

    The Taylor mean value solves
    ``phi'(x)(x - y) - phi(x) + phi(y) = phi''(s) (x - y)^2 / 2`` with
    ``phi''(s) = 1/s``, giving ``s = (x - y)^2 / (2 (y log(y/x) + x - y))``;
    equal arguments short-circuit to ``s = x``.
    """

    def __call__(self, s):
        return s * np.log(s)

    def prime(self, s):
        return np.log(s) + 1.0

    def second(self, s):
        return 1.0 / s

    def mean_value(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        denom = 2.0 * (y * np.log(np.where(y > 0, y, 1.0) / np.where(x > 0, x, 1.0)) + x - y)
        same = np.isclose(x, y, rtol=1e-13, atol=0.0)
        safe = np.where(same, 1.0, denom)
        return np.where(same, x, (x - y) ** 2 / safe)


def convexity_jump_diagnostic(space, u_coeffs, rho, phi, flux_operator=None):
    """Evaluate both sides of the convexity/jump identity for the upwind form.

    Returns ``(lhs, rhs)`` where lhs combines the upwind-divergence and the
    exact-divergence integrals and rhs is the nonnegative face-jump sum; the
    two agree for any convex C^2 ``phi`` with exact Taylor mean values.
    """
    mesh = space.mesh
    rho = np.asarray(rho, dtype=float)
    if isinstance(phi, PhiSLogS) and np.any(rho <= 0):
        raise ValueError("s log s diagnostic requires strictly positive density")
    upw = assemble_upwind(space, u_coeffs, flux_operator)
    div_upw = upw.flux_form @ rho  # |T| * div_upw(rho u) per element
    lhs1 = float(np.dot(phi.prime(rho), div_upw))

    rule = VOLUME_RULE
    tris = np.arange(mesh.num_triangles)
    _, grads = space.eval_function(np.asarray(u_coeffs, dtype=float), tris, rule.bary)
    div_u = grads[..., 0, 0] + grads[..., 1, 1]
    int_div = (div_u @ rule.weights) * mesh.tri_area  # integral_T div(u)
    lhs2 = float(np.dot(rho * phi.prime(rho) - phi(rho), int_div))

    interior = mesh.interior_faces()
    owner = mesh.face_owner[interior]
    neighbor = mesh.face_neighbor[interior]
    jump = rho[owner] - rho[neighbor]
    q = upw.fluxes[interior]
    # the Taylor remainder pairs the downwind value first
    down = np.where(q >= 0, neighbor, owner)
    up = np.where(q >= 0, owner, neighbor)
    s = phi.mean_value(rho[down], rho[up])
    rhs = 0.5 * float(np.sum(phi.second(s) * np.abs(q) * jump ** 2))
    return lhs1 - lhs2, rhs


def dump_matrix(matrix, path):
    """Write a sparse matrix as ``row col value`` lines (debug aid)."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8") as fh:
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {v!r}\n")
