import numpy as np
import pytest

from grstokes.mesh import (
    Mesh,
    MeshFormatError,
    MeshTopologyError,
    face_flux_frame,
    jittered_unit_square,
    load_mesh,
    save_mesh,
    structured_unit_square,
    uniform_refine,
    unstructured_sample,
)


def canonical_triangles(mesh):
    """Canonical, node-order-independent representation of a triangulation."""
    order = np.lexsort((mesh.nodes[:, 1], mesh.nodes[:, 0]))
    relabel = np.empty(len(order), dtype=int)
    relabel[order] = np.arange(len(order))
    tris = relabel[mesh.triangles]
    rolled = []
    for t in tris:
        k = int(np.argmin(t))
        rolled.append(tuple(np.roll(t, -k)))
    return sorted(rolled), mesh.nodes[order]


def test_structured_counts():
    m = structured_unit_square(15)
    assert m.num_triangles == 450  # the benchmark grid size
    m1 = structured_unit_square(1)
    assert m1.num_triangles == 2
    assert abs(m1.tri_area.sum() - 1.0) < 1e-15


def test_structured_euler_formula():
    m = structured_unit_square(4)
    assert m.num_triangles == 32
    assert m.num_nodes == 25
    assert m.num_faces == 56
    # Euler characteristic of a disc: V - E + F = 1
    assert m.num_nodes - m.num_faces + m.num_triangles == 1


def test_structured_invalid_n():
    with pytest.raises(ValueError):
        structured_unit_square(0)


def test_face_topology_invariants(mesh4):
    interior = ~mesh4.face_on_boundary
    assert np.all(mesh4.face_neighbor[interior] >= 0)
    assert np.all(mesh4.face_neighbor[~interior] == -1)
    # owner has the lower triangle index
    assert np.all(
        mesh4.face_owner[interior] < mesh4.face_neighbor[interior]
    )
    # unit normals
    np.testing.assert_allclose(
        np.linalg.norm(mesh4.face_normal, axis=1), 1.0, atol=1e-14
    )
    mesh4.validate()


def test_area_sum_matches_domain(mesh8):
    assert abs(mesh8.tri_area.sum() - 1.0) < 1e-12


def test_refine_counts_and_area():
    m = structured_unit_square(1)
    r = uniform_refine(m)
    assert r.num_triangles == 8
    assert abs(r.tri_area.sum() - m.tri_area.sum()) < 1e-14


def test_refine_matches_structured():
    a, na = canonical_triangles(uniform_refine(structured_unit_square(2)))
    b, nb = canonical_triangles(structured_unit_square(4))
    np.testing.assert_allclose(na, nb, atol=1e-15)
    assert a == b


def test_refine_halves_h():
    m = structured_unit_square(2)
    r = uniform_refine(m)
    assert abs(r.h_max - 0.5 * m.h_max) < 1e-15


def test_refine_preserves_boundary():
    r = uniform_refine(uniform_refine(structured_unit_square(3)))
    b = r.nodes[r.node_on_boundary]
    on_edge = (
        (np.abs(b[:, 0]) < 1e-14)
        | (np.abs(b[:, 0] - 1) < 1e-14)
        | (np.abs(b[:, 1]) < 1e-14)
        | (np.abs(b[:, 1] - 1) < 1e-14)
    )
    assert np.all(on_edge)


def test_clockwise_triangle_rejected():
    nodes = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
    with pytest.raises(MeshTopologyError):
        Mesh(nodes, [[0, 2, 1]])


def test_load_save_roundtrip(tmp_path):
    m = structured_unit_square(3)
    path = tmp_path / "m.txt"
    save_mesh(m, path, comment="roundtrip test")
    m2 = load_mesh(path)
    assert np.array_equal(m.triangles, m2.triangles)
    np.testing.assert_array_equal(m.nodes, m2.nodes)


def test_load_simple_square(tmp_path):
    path = tmp_path / "unit.txt"
    path.write_text(
        "# unit square, two triangles\n4 2\n0 0\n1 0\n1 1\n0 1\n0 1 2\n0 2 3\n"
    )
    m = load_mesh(path)
    assert m.num_triangles == 2
    assert abs(m.tri_area.sum() - 1.0) < 1e-15


def test_load_clockwise_file_is_topology_error(tmp_path):
    path = tmp_path / "cw.txt"
    path.write_text("3 1\n0 0\n1 0\n0 1\n0 2 1\n")
    with pytest.raises(MeshTopologyError):
        load_mesh(path)


@pytest.mark.parametrize(
    "content",
    [
        "",  # empty
        "4\n",  # bad header
        "3 1\n0 0\n1 0\n0 1\n",  # missing triangle line
        "3 1\n0 0\nx 0\n0 1\n0 1 2\n",  # malformed float
    ],
)
def test_load_malformed_files(tmp_path, content):
    path = tmp_path / "bad.txt"
    path.write_text(content)
    with pytest.raises(MeshFormatError):
        load_mesh(path)


def test_nonconforming_rejected():
    # three triangles sharing one edge
    nodes = [[0, 0], [1, 0], [0, 1], [1, 1], [-1, 1]]
    tris = [[0, 1, 2], [1, 3, 2], [0, 2, 4]]
    Mesh(nodes, tris)  # fine: edge (0,2) used twice, (1,2) twice
    bad = [[0, 1, 2], [1, 3, 2], [0, 1, 4]]
    with pytest.raises(MeshTopologyError):
        Mesh(nodes, bad)


def test_shipped_sample_matches_header():
    m = unstructured_sample()
    assert m.num_triangles == 450
    assert abs(m.tri_area.sum() - 1.0) < 1e-12


def test_jitter_deterministic_and_valid():
    a = jittered_unit_square(6, seed=3)
    b = jittered_unit_square(6, seed=3)
    np.testing.assert_array_equal(a.nodes, b.nodes)
    a.validate()
    # boundary nodes untouched
    base = structured_unit_square(6)
    np.testing.assert_array_equal(
        a.nodes[a.node_on_boundary], base.nodes[base.node_on_boundary]
    )


def test_face_flux_frame_unit_segment():
    # n=1 mesh has the face (0,0)-(1,0) on the boundary
    m = structured_unit_square(1)
    face = next(
        f
        for f in range(m.num_faces)
        if np.allclose(m.face_midpoint[f], [0.5, 0.0])
    )
    normal, points, weights = face_flux_frame(m, face)
    assert abs(weights.sum() - 1.0) < 1e-14  # = |F|
    assert abs(np.sum(weights * np.ones(len(weights))) - 1.0) < 1e-14
    # exact for cubics: integral of x^3 over the segment is 1/4
    assert abs(np.sum(weights * points[:, 0] ** 3) - 0.25) < 1e-14
    np.testing.assert_allclose(normal, [0.0, -1.0], atol=1e-15)


def test_opposite_normals_via_signs(mesh4):
    # owner outward normal equals minus the neighbor outward normal
    for t in range(mesh4.num_triangles):
        for m in range(3):
            f = mesh4.tri_faces[t, m]
            if mesh4.face_on_boundary[f]:
                assert mesh4.tri_face_sign[t, m] == 1.0
    interior = np.nonzero(~mesh4.face_on_boundary)[0]
    for f in interior:
        t, l = mesh4.face_owner[f], mesh4.face_neighbor[f]
        st = mesh4.tri_face_sign[t][mesh4.tri_faces[t] == f]
        sl = mesh4.tri_face_sign[l][mesh4.tri_faces[l] == f]
        assert st[0] == 1.0 and sl[0] == -1.0
