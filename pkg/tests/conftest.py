import numpy as np
import pytest

from grstokes.fespace import BRSpace
from grstokes.mesh import structured_unit_square


@pytest.fixture(scope="session")
def mesh4():
    return structured_unit_square(4)


@pytest.fixture(scope="session")
def mesh8():
    return structured_unit_square(8)


@pytest.fixture(scope="session")
def space4(mesh4):
    return BRSpace(mesh4)


@pytest.fixture(scope="session")
def space8(mesh8):
    return BRSpace(mesh8)


@pytest.fixture()
def rng():
    return np.random.default_rng(91252)


def barycentric_of(mesh, tri, points):
    """Barycentric coordinates of physical points, solved independently."""
    p = mesh.nodes[mesh.triangles[tri]]
    A = np.array(
        [
            [1.0, 1.0, 1.0],
            [p[0, 0], p[1, 0], p[2, 0]],
            [p[0, 1], p[1, 1], p[2, 1]],
        ]
    )
    rhs = np.vstack([np.ones(len(points)), points.T])
    return np.linalg.solve(A, rhs).T
