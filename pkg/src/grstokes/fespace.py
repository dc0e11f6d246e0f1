"""Bernardi-Raugel velocity space and piecewise-constant scalar space.

The velocity space couples continuous vector P1 hat functions (two
components per interior node) with one normal-weighted quadratic face
bubble per interior face.  Homogeneous Dirichlet conditions are built into
the degree-of-freedom map: boundary nodes and boundary faces carry no
unknowns.  The bubble on face F with endpoints i, j is ``4 li lj n_F``
(value ``n_F`` at the face midpoint), with the single global normal of the
mesh; every downstream constant uses this normalization.
"""

from __future__ import annotations

import numpy as np

from .quadrature import VOLUME_RULE, segment_rule


class BoundaryValueError(ValueError):
    """Raised when an interpolated field violates the Dirichlet condition."""


#: local velocity dof layout per triangle:
#: 0..5  -> (node0 x, node0 y, node1 x, node1 y, node2 x, node2 y)
#: 6..8  -> bubble of the face opposite local vertex 0, 1, 2
N_LOCAL = 9


class BRSpace:
    """Bernardi-Raugel velocity space with built-in Dirichlet conditions.

    Attributes
    ----------
    node_dof : ndarray (nv,)
        First of the two component dofs at each node, -1 on the boundary.
    face_dof : ndarray (nf,)
        Bubble dof per face, -1 on the boundary.
    element_dofs : ndarray (nt, 9)
        Global dof per local basis function, -1 where constrained.
    ndof : int
        Dimension of the constrained space.
    """

    def __init__(self, mesh):
        self.mesh = mesh
        nv, nf = mesh.num_nodes, mesh.num_faces
        self.node_dof = np.full(nv, -1, dtype=np.int64)
        interior_nodes = np.nonzero(~mesh.node_on_boundary)[0]
        self.node_dof[interior_nodes] = 2 * np.arange(len(interior_nodes))
        base = 2 * len(interior_nodes)
        self.face_dof = np.full(nf, -1, dtype=np.int64)
        interior_faces = np.nonzero(~mesh.face_on_boundary)[0]
        self.face_dof[interior_faces] = base + np.arange(len(interior_faces))
        self.ndof = base + len(interior_faces)

        ed = np.full((mesh.num_triangles, N_LOCAL), -1, dtype=np.int64)
        tris = mesh.triangles
        for k in range(3):
            nd = self.node_dof[tris[:, k]]
            has = nd >= 0
            ed[has, 2 * k] = nd[has]
            ed[has, 2 * k + 1] = nd[has] + 1
        fd = self.face_dof[mesh.tri_faces]
        ed[:, 6:9] = fd
        self.element_dofs = ed

    # -- basis evaluation --------------------------------------------------

    def eval_basis(self, tri, bary):
        """Values and gradients of the 9 local basis functions.

        Parameters
        ----------
        tri : int or ndarray
            Triangle index (or indices for a batched call).
        bary : ndarray (nq, 3)
            Evaluation points in barycentric coordinates.

        Returns
        -------
        values : ndarray (..., nq, 9, 2)
        grads : ndarray (..., nq, 9, 2, 2)
            ``grads[..., a, b]`` is d(value_a)/d(x_b).
        """
        mesh = self.mesh
        tri = np.asarray(tri)
        scalar_input = tri.ndim == 0
        tri = np.atleast_1d(tri)
        bary = np.asarray(bary, dtype=float)
        nq = bary.shape[0]
        nt = len(tri)

        gl = mesh.grad_lambda[tri]  # (nt, 3, 2)
        values = np.zeros((nt, nq, N_LOCAL, 2))
        grads = np.zeros((nt, nq, N_LOCAL, 2, 2))
        for k in range(3):
            lam = bary[:, k]
            values[:, :, 2 * k, 0] = lam[None, :]
            values[:, :, 2 * k + 1, 1] = lam[None, :]
            grads[:, :, 2 * k, 0, :] = gl[:, None, k, :]
            grads[:, :, 2 * k + 1, 1, :] = gl[:, None, k, :]
        for m in range(3):
            i, j = (m + 1) % 3, (m + 2) % 3
            b = 4.0 * bary[:, i] * bary[:, j]  # 1 at the face midpoint
            gb = 4.0 * (
                bary[None, :, j, None] * gl[:, None, i, :]
                + bary[None, :, i, None] * gl[:, None, j, :]
            )  # (nt, nq, 2)
            nF = mesh.face_normal[mesh.tri_faces[tri, m]]  # (nt, 2)
            values[:, :, 6 + m, :] = b[None, :, None] * nF[:, None, :]
            grads[:, :, 6 + m, :, :] = nF[:, None, :, None] * gb[:, :, None, :]
        if scalar_input:
            return values[0], grads[0]
        return values, grads

    def eval_function(self, coeffs, tri, bary):
        """Evaluate the discrete field (and gradient) with given coefficients."""
        values, grads = self.eval_basis(tri, bary)
        local = self.local_coefficients(coeffs, tri)
        if np.asarray(tri).ndim == 0:
            vals = np.einsum("qld,l->qd", values, local)
            grds = np.einsum("qlde,l->qde", grads, local)
        else:
            vals = np.einsum("tqld,tl->tqd", values, local)
            grds = np.einsum("tqlde,tl->tqde", grads, local)
        return vals, grds

    def local_coefficients(self, coeffs, tri):
        """Gather the 9 local coefficients (constrained entries are zero)."""
        ed = self.element_dofs[tri]
        local = np.where(ed >= 0, np.asarray(coeffs)[np.minimum(ed, len(coeffs) - 1)], 0.0)
        return local

    # -- interpolation -----------------------------------------------------

    def interpolate(self, u, boundary_tol=1e-10):
        """Coefficients of the Bernardi-Raugel interpolant of ``u``.

        Vertex dofs take the pointwise values; each interior face bubble is
        chosen so the interpolant's mean normal flux over the face matches
        the flux of ``u`` (5-point Gauss per face).  ``u`` must satisfy the
        homogeneous Dirichlet condition at boundary nodes.
        """
        mesh = self.mesh
        coeffs = np.zeros(self.ndof)
        ux, uy = _eval_field(u, mesh.nodes[:, 0], mesh.nodes[:, 1])
        bad = mesh.node_on_boundary & (np.hypot(ux, uy) > boundary_tol)
        if np.any(bad):
            worst = np.hypot(ux, uy)[bad].max()
            raise BoundaryValueError(
                f"field magnitude {worst:.3e} at boundary nodes exceeds {boundary_tol:.1e}"
            )
        free = self.node_dof >= 0
        coeffs[self.node_dof[free]] = ux[free]
        coeffs[self.node_dof[free] + 1] = uy[free]

        s, w = segment_rule(5)
        interior = mesh.interior_faces()
        a = mesh.nodes[mesh.faces[interior, 0]]
        b = mesh.nodes[mesh.faces[interior, 1]]
        pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
        qx, qy = _eval_field(u, pts[..., 0], pts[..., 1])
        un = qx * mesh.face_normal[interior, 0:1] + qy * mesh.face_normal[interior, 1:2]
        flux = (un * w[None, :]).sum(axis=1) * mesh.face_length[interior]
        # P1 part contributes the endpoint-average flux; bubble integral is 2|F|/3
        na, nb = mesh.faces[interior, 0], mesh.faces[interior, 1]
        p1_flux = 0.5 * mesh.face_length[interior] * (
            (ux[na] + ux[nb]) * mesh.face_normal[interior, 0]
            + (uy[na] + uy[nb]) * mesh.face_normal[interior, 1]
        )
        coeffs[self.face_dof[interior]] = (flux - p1_flux) / (
            2.0 * mesh.face_length[interior] / 3.0
        )
        return coeffs


def _eval_field(u, x, y):
    """Evaluate a vector callable at array coordinates, broadcasting results."""
    out = u(x, y)
    ux, uy = out
    ux = np.broadcast_to(np.asarray(ux, dtype=float), np.shape(x)).copy()
    uy = np.broadcast_to(np.asarray(uy, dtype=float), np.shape(x)).copy()
    return ux, uy


class P0Space:
    """Piecewise-constant scalar space: one dof per triangle."""

    def __init__(self, mesh):
        self.mesh = mesh
        self.ndof = mesh.num_triangles


def pi0_project(space, f, rule=VOLUME_RULE):
    """Elementwise means of ``f``: the L2 projection onto piecewise constants."""
    mesh = space.mesh
    pts = mesh.points_from_barycentric(rule.bary)
    vals = np.asarray(f(pts[..., 0], pts[..., 1]), dtype=float)
    vals = np.broadcast_to(vals, pts.shape[:2])
    return vals @ rule.weights


def interpolate_velocity(space, u, boundary_tol=1e-10):
    """Functional wrapper around :meth:`BRSpace.interpolate`."""
    return space.interpolate(u, boundary_tol=boundary_tol)
