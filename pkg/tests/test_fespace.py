import numpy as np
import pytest

from conftest import barycentric_of
from grstokes.fespace import BoundaryValueError, BRSpace, P0Space, interpolate_velocity, pi0_project
from grstokes.mesh import structured_unit_square
from grstokes.quadrature import FACE_RULE


def test_dof_counts(mesh4, space4):
    interior_nodes = int((~mesh4.node_on_boundary).sum())
    interior_faces = int((~mesh4.face_on_boundary).sum())
    assert space4.ndof == 2 * interior_nodes + interior_faces
    assert interior_nodes == 9  # (n-1)^2 for n=4
    assert interior_faces == 40  # 3n^2 - 2n


def test_hat_values_at_vertices(space4):
    vals, _ = space4.eval_basis(0, np.eye(3))
    for k in range(3):
        for comp in range(2):
            expected = np.zeros((3, 2))
            expected[k, comp] = 1.0
            np.testing.assert_allclose(vals[:, 2 * k + comp, :], expected, atol=1e-15)


def test_partition_of_unity(space4, rng):
    bary = rng.dirichlet([1, 1, 1], size=5)
    vals, _ = space4.eval_basis(2, bary)
    np.testing.assert_allclose(vals[:, 0:6:2, 0].sum(axis=1), 1.0, atol=1e-14)
    np.testing.assert_allclose(vals[:, 1:6:2, 1].sum(axis=1), 1.0, atol=1e-14)


def test_bubble_midpoint_normalization(mesh4, space4):
    # bubble value at its face midpoint equals the global unit normal
    for m in range(3):
        bary = np.full((1, 3), 0.5)
        bary[0, m] = 0.0
        vals, _ = space4.eval_basis(7, bary)
        face = mesh4.tri_faces[7, m]
        np.testing.assert_allclose(vals[0, 6 + m, :], mesh4.face_normal[face], atol=1e-14)


def test_gradients_match_finite_differences(space4, rng):
    bary = np.array([[0.3, 0.45, 0.25]])
    tri = 5
    coeffs = rng.standard_normal(space4.ndof)
    _, grads = space4.eval_function(coeffs, tri, bary)
    p = space4.mesh.points_from_barycentric(bary)[tri][0]
    h = 1e-6
    for comp in range(2):
        for direction in range(2):
            shift = np.zeros(2)
            shift[direction] = h
            bp = barycentric_of(space4.mesh, tri, np.array([p + shift, p - shift]))
            vp, _ = space4.eval_function(coeffs, tri, bp)
            fd = (vp[0, comp] - vp[1, comp]) / (2 * h)
            assert abs(grads[0, comp, direction] - fd) < 1e-6


def test_continuity_across_interior_faces(mesh8, space8, rng):
    coeffs = rng.standard_normal(space8.ndof)
    scale = np.linalg.norm(coeffs)
    s, _ = FACE_RULE
    for f in mesh8.interior_faces()[::7]:
        a, b = mesh8.nodes[mesh8.faces[f, 0]], mesh8.nodes[mesh8.faces[f, 1]]
        pts = a[None, :] + s[:, None] * (b - a)[None, :]
        t1, t2 = mesh8.face_owner[f], mesh8.face_neighbor[f]
        v1, _ = space8.eval_function(coeffs, t1, barycentric_of(mesh8, t1, pts))
        v2, _ = space8.eval_function(coeffs, t2, barycentric_of(mesh8, t2, pts))
        assert np.abs(v1 - v2).max() <= 1e-12 * scale


def test_dirichlet_boundary_values(mesh8, space8, rng):
    coeffs = rng.standard_normal(space8.ndof)
    scale = np.linalg.norm(coeffs)
    s, _ = FACE_RULE
    for f in np.nonzero(mesh8.face_on_boundary)[0]:
        a, b = mesh8.nodes[mesh8.faces[f, 0]], mesh8.nodes[mesh8.faces[f, 1]]
        pts = a[None, :] + s[:, None] * (b - a)[None, :]
        t = mesh8.face_owner[f]
        v, _ = space8.eval_function(coeffs, t, barycentric_of(mesh8, t, pts))
        assert np.abs(v).max() <= 1e-12 * scale


def test_pi0_constant(mesh4):
    p0 = P0Space(mesh4)
    coeffs = pi0_project(p0, lambda x, y: 3.0 + 0.0 * x)
    np.testing.assert_allclose(coeffs, 3.0, atol=1e-14)


def test_pi0_linear_equals_barycenter():
    mesh = structured_unit_square(1)
    p0 = P0Space(mesh)
    coeffs = pi0_project(p0, lambda x, y: x)
    # triangles (0,0)-(1,0)-(1,1) and (0,0)-(1,1)-(0,1)
    np.testing.assert_allclose(coeffs, [2.0 / 3.0, 1.0 / 3.0], atol=1e-14)


def test_pi0_idempotent(mesh4, rng):
    p0 = P0Space(mesh4)
    vals = rng.random(mesh4.num_triangles)

    def piecewise(x, y):
        out = np.zeros_like(x)
        for t in range(mesh4.num_triangles):
            bary = np.stack(
                [
                    barycentric_of(mesh4, t, np.column_stack([x[i], y[i]]))
                    for i in range(x.shape[0])
                ]
            )
            inside = (bary >= -1e-12).all(axis=-1)[:, 0]
            # only called below with per-triangle points, so fill directly
        return out

    # simpler: project the projection evaluated through element lookup
    pts = mesh4.points_from_barycentric(np.array([[1 / 3, 1 / 3, 1 / 3]]))

    def field(x, y):
        # constant per triangle: recover triangle from the quadrature layout
        return np.broadcast_to(vals[:, None], x.shape)

    coeffs = pi0_project(p0, field)
    np.testing.assert_allclose(coeffs, vals, atol=1e-14)


def test_interpolate_zero(space4):
    coeffs = interpolate_velocity(space4, lambda x, y: (0.0 * x, 0.0 * y))
    assert np.all(coeffs == 0.0)


def test_interpolate_reproduces_space(mesh8, space8, rng):
    target = rng.standard_normal(space8.ndof)

    def field(x, y):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        pts = np.column_stack([x.ravel(), y.ravel()])
        out = np.zeros((len(pts), 2))
        # locate each point in some containing triangle (slow, test-only)
        for i, p in enumerate(pts):
            for t in range(mesh8.num_triangles):
                bary = barycentric_of(mesh8, t, p[None, :])
                if (bary >= -1e-10).all():
                    v, _ = space8.eval_function(target, t, bary)
                    out[i] = v[0]
                    break
        return out[:, 0].reshape(np.shape(x)), out[:, 1].reshape(np.shape(x))

    coeffs = space8.interpolate(field)
    np.testing.assert_allclose(coeffs, target, atol=1e-9)


def test_interpolate_flux_matching():
    # the curl of a scalar has exact face fluxes psi(b) - psi(a)
    mesh = structured_unit_square(5)
    space = BRSpace(mesh)

    def psi(x, y):
        return x ** 2 * (x - 1) ** 2 * y ** 2 * (y - 1) ** 2

    def u(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        uy = x * x * (x - 1) ** 2 * (2 * y * (y - 1) ** 2 + y * y * 2 * (y - 1))
        ux_neg = (2 * x * (x - 1) ** 2 + x * x * 2 * (x - 1)) * y * y * (y - 1) ** 2
        return uy, -ux_neg

    coeffs = space.interpolate(u)
    s, w = FACE_RULE
    for f in mesh.interior_faces():
        na, nb = mesh.faces[f]
        a, b = mesh.nodes[na], mesh.nodes[nb]
        t = (b - a) / np.linalg.norm(b - a)
        sign = 1.0 if np.dot([t[1], -t[0]], mesh.face_normal[f]) > 0 else -1.0
        exact_flux = sign * (psi(*b) - psi(*a))
        tri = mesh.face_owner[f]
        pts = a[None, :] + s[:, None] * (b - a)[None, :]
        v, _ = space.eval_function(coeffs, tri, barycentric_of(mesh, tri, pts))
        flux = np.sum(w * (v @ mesh.face_normal[f])) * mesh.face_length[f]
        assert abs(flux - exact_flux) < 1e-12


def test_interpolate_rejects_boundary_violation(space4):
    with pytest.raises(BoundaryValueError):
        interpolate_velocity(space4, lambda x, y: (1.0 + 0.0 * x, 0.0 * y))
