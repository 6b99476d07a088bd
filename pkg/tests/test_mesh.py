import math

import numpy as np
import pytest

from gravstrings.errors import CoincidentPointsUnresolvable, ParameterError
from gravstrings.mesh import build_icosphere, snap_points


@pytest.mark.parametrize("level", [0, 1, 2, 3, 4])
def test_icosphere_topology(level):
    mesh = build_icosphere(level)
    assert mesh.n_vertices == 10 * 4**level + 2
    assert len(mesh.faces) == 20 * 4**level
    assert mesh.euler_characteristic() == 2
    assert np.allclose(np.linalg.norm(mesh.vertices, axis=1), 1.0)


def test_stiffness_properties():
    mesh = build_icosphere(3)
    W = mesh.stiffness
    assert abs(W - W.T).max() < 1e-14
    assert mesh.metadata["max_row_sum"] < 1e-12
    assert mesh.metadata["min_off_diagonal"] > 0
    eig = np.linalg.eigvalsh(W.toarray())
    assert eig.max() < 1e-10


def test_area_converges_to_sphere():
    defects = [build_icosphere(k).metadata["area_defect"] for k in (2, 3, 4)]
    assert all(d > 0 for d in defects)
    assert defects[1] < defects[0] / 3.5 and defects[2] < defects[1] / 3.5


def test_laplacian_on_first_harmonics():
    # the twelve valence-5 vertices keep an O(1) pointwise error; the L2 error converges
    errs = []
    for level in (4, 5):
        mesh = build_icosphere(level)
        z = mesh.vertices[:, 2]
        e = mesh.apply_laplacian(z) + 2.0 * z
        errs.append(math.sqrt(np.dot(mesh.areas, e**2) / mesh.total_area))
    assert errs[1] < 1e-2
    assert errs[1] < 0.6 * errs[0]


def test_outward_orientation():
    mesh = build_icosphere(2)
    tri = mesh.vertices[mesh.faces]
    normal = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    assert np.all(np.einsum("ij,ij->i", normal, tri.mean(axis=1)) > 0)


@pytest.mark.parametrize("level", [-1, 9, 2.5, True])
def test_bad_level(level):
    with pytest.raises(ParameterError):
        build_icosphere(level)


def test_snap_points_and_multiplicity():
    mesh = build_icosphere(2)
    pts = snap_points(mesh, [[0, 0, 2.0], [0, 0, -1.0]], [3, 1])
    assert pts.N == 4
    assert np.allclose(mesh.vertices[pts.indices[0]], [0, 0, 1], atol=0.2)


def test_coincident_points():
    mesh = build_icosphere(1)
    with pytest.raises(CoincidentPointsUnresolvable):
        snap_points(mesh, [[0, 0, 1.0], [0.001, 0, 1.0]])
    with pytest.raises(ParameterError):
        snap_points(mesh, [[0, 0, 1.0]], [0])


def test_edge_length_scale():
    mesh = build_icosphere(4)
    h = mesh.edge_length_at(np.arange(mesh.n_vertices))
    assert h.max() / h.min() < 1.5
    assert h.mean() == pytest.approx(math.sqrt(16 * math.pi / (math.sqrt(3) * len(mesh.faces))), rel=0.1)
