"""Conforming triangulations of polygonal domains.

A :class:`Mesh` is immutable after construction: all connectivity and
geometry caches (face normals, areas, barycentric gradients) are built once
and queried read-only by the FEM/FV assembly.  Every face stores a single
global unit normal, outward with respect to its *owner* triangle (the
incident triangle with the lower index); all flux bookkeeping derives signs
from that convention, which makes opposite-side fluxes exact negatives of
each other by construction.
"""

from __future__ import annotations

import numpy as np

from .quadrature import FACE_RULE


class MeshFormatError(ValueError):
    """Raised when a mesh file cannot be parsed."""


class MeshTopologyError(ValueError):
    """Raised when mesh data violates conformity or orientation."""


def _cross2(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


class Mesh:
    """2D conforming triangle mesh with oriented faces.

    Parameters
    ----------
    nodes : array_like, shape (nv, 2)
        Vertex coordinates.
    triangles : array_like, shape (nt, 3)
        Vertex indices per triangle, counterclockwise.

    Attributes
    ----------
    faces : ndarray, shape (nf, 2)
        Endpoint node indices, lower index first, lexicographically sorted.
    face_owner, face_neighbor : ndarray, shape (nf,)
        Incident triangles; owner is the lower triangle index, neighbor is
        -1 on the boundary.
    face_normal : ndarray, shape (nf, 2)
        Unit normal, outward with respect to the owner triangle.
    tri_faces : ndarray, shape (nt, 3)
        Face index opposite each local vertex.
    tri_face_sign : ndarray, shape (nt, 3)
        +1 where the global face normal is outward for this triangle.
    """

    def __init__(self, nodes, triangles):
        self.nodes = np.ascontiguousarray(nodes, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise MeshTopologyError("nodes must be an (nv, 2) array")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshTopologyError("triangles must be an (nt, 3) array")
        if self.triangles.min(initial=0) < 0 or self.triangles.max(initial=-1) >= len(self.nodes):
            raise MeshTopologyError("triangle vertex index out of range")
        self._build_geometry()
        self._build_faces()
        self.validate()

    # -- construction ----------------------------------------------------

    def _build_geometry(self):
        p = self.nodes[self.triangles]  # (nt, 3, 2)
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        signed = 0.5 * _cross2(e1, e2)
        if np.any(signed <= 0):
            bad = int(np.argmin(signed))
            raise MeshTopologyError(
                f"triangle {bad} is degenerate or clockwise (signed area {signed[bad]:.3e})"
            )
        self.tri_area = signed
        self.tri_centroid = p.mean(axis=1)
        # barycentric gradients: grad lambda_i = perp(p_{i+2} - p_{i+1}) / (2A)
        self.grad_lambda = np.empty((len(self.triangles), 3, 2))
        for i in range(3):
            edge = p[:, (i + 2) % 3] - p[:, (i + 1) % 3]
            self.grad_lambda[:, i, 0] = -edge[:, 1]
            self.grad_lambda[:, i, 1] = edge[:, 0]
        self.grad_lambda /= (2.0 * self.tri_area)[:, None, None]
        edges = np.stack([p[:, 1] - p[:, 2], p[:, 2] - p[:, 0], p[:, 0] - p[:, 1]])
        self.tri_hmax = np.sqrt((edges ** 2).sum(axis=-1)).max(axis=0)

    def _build_faces(self):
        nt = len(self.triangles)
        # local face m is opposite local vertex m
        ends = np.stack(
            [self.triangles[:, [(m + 1) % 3, (m + 2) % 3]] for m in range(3)], axis=1
        )  # (nt, 3, 2)
        key = np.sort(ends.reshape(-1, 2), axis=1)
        uniq, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        if counts.max(initial=0) > 2:
            raise MeshTopologyError("non-conforming mesh: a face has more than two triangles")
        self.faces = uniq
        self.tri_faces = inverse.reshape(nt, 3)
        nf = len(uniq)
        owner = np.full(nf, -1, dtype=np.int64)
        neighbor = np.full(nf, -1, dtype=np.int64)
        for t in range(nt):
            for f in self.tri_faces[t]:
                if owner[f] < 0:
                    owner[f] = t
                else:
                    neighbor[f] = t
        self.face_owner = owner
        self.face_neighbor = neighbor
        self.face_on_boundary = neighbor < 0

        a = self.nodes[self.faces[:, 0]]
        b = self.nodes[self.faces[:, 1]]
        tangent = b - a
        self.face_length = np.sqrt((tangent ** 2).sum(axis=1))
        if np.any(self.face_length <= 0):
            raise MeshTopologyError("zero-length face")
        self.face_midpoint = 0.5 * (a + b)
        normal = np.column_stack([tangent[:, 1], -tangent[:, 0]]) / self.face_length[:, None]
        # orient outward from the owner (centroid lies strictly inside)
        flip = ((self.face_midpoint - self.tri_centroid[owner]) * normal).sum(axis=1) < 0
        normal[flip] *= -1.0
        self.face_normal = normal

        sign = np.where(owner[self.tri_faces] == np.arange(nt)[:, None], 1.0, -1.0)
        self.tri_face_sign = sign

        self.node_on_boundary = np.zeros(len(self.nodes), dtype=bool)
        bnd = self.faces[self.face_on_boundary]
        self.node_on_boundary[bnd.ravel()] = True

    # -- queries ----------------------------------------------------------

    @property
    def num_nodes(self):
        return len(self.nodes)

    @property
    def num_triangles(self):
        return len(self.triangles)

    @property
    def num_faces(self):
        return len(self.faces)

    @property
    def h_max(self):
        """Mesh width: largest triangle diameter (longest edge)."""
        return float(self.tri_hmax.max())

    def interior_faces(self):
        return np.nonzero(~self.face_on_boundary)[0]

    def points_from_barycentric(self, bary):
        """Physical coordinates of barycentric points on every triangle.

        Returns an (nt, nq, 2) array for ``bary`` of shape (nq, 3).
        """
        p = self.nodes[self.triangles]
        return np.einsum("qi,tid->tqd", np.asarray(bary), p)

    def validate(self):
        """Check conformity invariants; raises MeshTopologyError on failure."""
        interior = ~self.face_on_boundary
        if np.any(self.face_owner < 0):
            raise MeshTopologyError("face without owner triangle")
        if np.any(self.face_owner[interior] == self.face_neighbor[interior]):
            raise MeshTopologyError("face owned twice by the same triangle")
        # outward normal of each triangle's faces must be +-n_F per stored sign
        for m in range(3):
            f = self.tri_faces[:, m]
            outward = self.face_midpoint[f] - self.tri_centroid
            agree = (outward * self.face_normal[f]).sum(axis=1) * self.tri_face_sign[:, m]
            if np.any(agree <= 0):
                raise MeshTopologyError("face orientation cache inconsistent")


def structured_unit_square(n):
    """Uniform n x n grid on (0,1)^2, each square split along one diagonal.

    Produces ``2 n^2`` congruent triangles; all diagonals run from the
    lower-left to the upper-right corner of their square.
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def idx(i, j):
        return j * (n + 1) + i

    tris = []
    for j in range(n):
        for i in range(n):
            a = idx(i, j)
            b = idx(i + 1, j)
            c = idx(i + 1, j + 1)
            d = idx(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    return Mesh(nodes, np.array(tris, dtype=np.int64))


def uniform_refine(mesh):
    """Red refinement: split each triangle into four via edge midpoints."""
    nv = mesh.num_nodes
    mid_of_face = nv + np.arange(mesh.num_faces)
    midpoints = mesh.face_midpoint
    nodes = np.vstack([mesh.nodes, midpoints])
    t = mesh.triangles
    m = mid_of_face[mesh.tri_faces]  # midpoint opposite local vertex k
    children = np.concatenate(
        [
            np.stack([t[:, 0], m[:, 2], m[:, 1]], axis=1),
            np.stack([t[:, 1], m[:, 0], m[:, 2]], axis=1),
            np.stack([t[:, 2], m[:, 1], m[:, 0]], axis=1),
            np.stack([m[:, 0], m[:, 1], m[:, 2]], axis=1),
        ]
    )
    # keep children of one parent adjacent (parent k -> children 4k..4k+3)
    order = np.arange(4 * mesh.num_triangles).reshape(4, -1).T.ravel()
    return Mesh(nodes, children[order])


def load_mesh(path):
    """Read a mesh from the plain-text format.

    Line 1 holds ``NV NT``; then NV lines ``x y``; then NT lines ``i j k``
    with 0-based counterclockwise vertex indices.  ``#`` starts a comment.
    """
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            body = line.split("#", 1)[0].strip()
            if body:
                rows.append(body.split())
    if not rows:
        raise MeshFormatError(f"{path}: empty mesh file")
    header = rows[0]
    if len(header) != 2:
        raise MeshFormatError(f"{path}: header must be 'NV NT'")
    try:
        nv, nt = int(header[0]), int(header[1])
    except ValueError as exc:
        raise MeshFormatError(f"{path}: non-integer header") from exc
    if len(rows) != 1 + nv + nt:
        raise MeshFormatError(
            f"{path}: expected {1 + nv + nt} data lines, found {len(rows)}"
        )
    try:
        nodes = np.array([[float(r[0]), float(r[1])] for r in rows[1 : 1 + nv]])
        tris = np.array(
            [[int(r[0]), int(r[1]), int(r[2])] for r in rows[1 + nv :]], dtype=np.int64
        )
    except (ValueError, IndexError) as exc:
        raise MeshFormatError(f"{path}: malformed node or triangle line") from exc
    return Mesh(nodes, tris)


def save_mesh(mesh, path, comment=None):
    """Write a mesh in the plain-text format understood by load_mesh."""
    with open(path, "w", encoding="utf-8") as fh:
        if comment:
            for line in str(comment).splitlines():
                fh.write(f"# {line}\n")
        fh.write(f"{mesh.num_nodes} {mesh.num_triangles}\n")
        for x, y in mesh.nodes:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{int(a)} {int(b)} {int(c)}\n")


def jittered_unit_square(n, amplitude=0.2, seed=20240):
    """Deterministically jittered structured mesh (interior nodes only).

    Each interior node moves by a uniform perturbation of at most
    ``amplitude`` times the local grid spacing, giving an unstructured-like
    test mesh while preserving the boundary polygon exactly.
    """
    base = structured_unit_square(n)
    rng = np.random.default_rng(seed)
    shift = rng.uniform(-1.0, 1.0, size=base.nodes.shape) * (amplitude / n)
    shift[base.node_on_boundary] = 0.0
    return Mesh(base.nodes + shift, base.triangles)


def unstructured_sample():
    """The unstructured sample mesh shipped with the package (450 triangles)."""
    from importlib import resources

    with resources.as_file(resources.files("grstokes.data") / "unstructured_sample.txt") as p:
        return load_mesh(p)


def face_flux_frame(mesh, face):
    """Global normal plus a 2-point Gauss rule along the given face.

    Returns ``(normal, points, weights)`` where the rule integrates
    polynomials up to degree 3 exactly and the weights sum to the face
    length.
    """
    a = mesh.nodes[mesh.faces[face, 0]]
    b = mesh.nodes[mesh.faces[face, 1]]
    s, w = FACE_RULE
    points = a[None, :] + s[:, None] * (b - a)[None, :]
    weights = w * mesh.face_length[face]
    return mesh.face_normal[face], points, weights
