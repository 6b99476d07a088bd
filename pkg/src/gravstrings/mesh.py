"""Icosphere triangulation of the unit sphere with a cotangent Laplacian.

The discrete Laplacian is ``L = M^{-1} W`` where ``W`` is the symmetric
cotangent stiffness matrix (zero row sums, nonnegative off-diagonals on a
Delaunay mesh, negative semidefinite) and ``M`` the lumped (barycentric)
vertex areas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import CoincidentPointsUnresolvable, ParameterError

MAX_LEVEL = 8


@dataclass(frozen=True)
class SphereMesh:
    vertices: np.ndarray
    faces: np.ndarray
    stiffness: sparse.csr_matrix = field(repr=False)
    areas: np.ndarray = field(repr=False)
    level: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    @property
    def laplacian(self) -> sparse.csr_matrix:
        """M^{-1} W as an explicit sparse matrix."""
        return sparse.diags(1.0 / self.areas) @ self.stiffness

    def apply_laplacian(self, u) -> np.ndarray:
        return (self.stiffness @ np.asarray(u, dtype=float)) / self.areas

    def edges(self) -> np.ndarray:
        return _unique_edges(self.faces)

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges()) + len(self.faces)

    def edge_length_at(self, idx) -> np.ndarray:
        """Mean length of the edges incident to each vertex in ``idx``."""
        e = self.edges()
        lengths = np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)
        total = np.bincount(e.ravel(), weights=np.repeat(lengths, 2), minlength=self.n_vertices)
        count = np.bincount(e.ravel(), minlength=self.n_vertices)
        return (total / count)[np.asarray(idx)]


def _icosahedron():
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    v = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=float)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    return v / np.linalg.norm(v, axis=1, keepdims=True), f


def _unique_edges(faces):
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    return np.unique(np.sort(e, axis=1), axis=0)


def _subdivide(v, f):
    e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    e_sorted = np.sort(e, axis=1)
    uniq, inverse = np.unique(e_sorted, axis=0, return_inverse=True)
    mid = v[uniq[:, 0]] + v[uniq[:, 1]]
    mid /= np.linalg.norm(mid, axis=1, keepdims=True)
    nv = v.shape[0]
    m = inverse.reshape(3, -1).T + nv  # midpoints of edges (01, 12, 20) per face
    a, b, c = f[:, 0], f[:, 1], f[:, 2]
    m01, m12, m20 = m[:, 0], m[:, 1], m[:, 2]
    new_f = np.concatenate([
        np.stack([a, m01, m20], axis=1),
        np.stack([b, m12, m01], axis=1),
        np.stack([c, m20, m12], axis=1),
        np.stack([m01, m12, m20], axis=1),
    ])
    return np.concatenate([v, mid]), new_f


def cotangent_stiffness(vertices, faces):
    """Symmetric W with W_ij = (cot a_ij + cot b_ij)/2 and W_ii = -sum_j W_ij."""
    n = vertices.shape[0]
    rows, cols, vals = [], [], []
    for k in range(3):
        i, j, o = faces[:, k], faces[:, (k + 1) % 3], faces[:, (k + 2) % 3]
        u = vertices[i] - vertices[o]
        w = vertices[j] - vertices[o]
        cot = np.einsum("ij,ij->i", u, w) / np.linalg.norm(np.cross(u, w), axis=1)
        rows += [i, j]
        cols += [j, i]
        vals += [0.5 * cot, 0.5 * cot]
    W = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    W = W - sparse.diags(np.asarray(W.sum(axis=1)).ravel())
    return W.tocsr()


def lumped_areas(vertices, faces):
    tri = vertices[faces]
    area = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    return np.bincount(faces.ravel(), weights=np.repeat(area / 3.0, 3), minlength=vertices.shape[0])


def build_icosphere(level: int) -> SphereMesh:
    """Icosahedron subdivided ``level`` times and projected to the unit sphere."""
    if isinstance(level, bool) or int(level) != level or not 0 <= level <= MAX_LEVEL:
        raise ParameterError(f"level must be an integer in [0, {MAX_LEVEL}], got {level!r}")
    v, f = _icosahedron()
    for _ in range(int(level)):
        v, f = _subdivide(v, f)
    W = cotangent_stiffness(v, f)
    areas = lumped_areas(v, f)
    off = W - sparse.diags(W.diagonal())
    min_off = float(off.data.min()) if off.nnz else 0.0
    if min_off < 0:
        # icosphere triangles are acute at every level up to MAX_LEVEL, so this
        # is a guard against future mesh sources rather than a live path
        raise ParameterError(f"negative cotangent weight {min_off} on level {level}")
    total = float(areas.sum())
    mesh = SphereMesh(
        vertices=v, faces=f, stiffness=W, areas=areas, level=int(level),
        metadata={
            "area_defect": 1.0 - total / (4.0 * math.pi),
            "min_off_diagonal": min_off,
            "edge_flips": 0,
            "max_row_sum": float(np.max(np.abs(np.asarray(W.sum(axis=1)).ravel()))),
        },
    )
    if mesh.euler_characteristic() != 2:
        raise AssertionError("icosphere Euler characteristic is not 2")
    return mesh


@dataclass(frozen=True)
class StringPoints:
    """String points snapped to vertices: unique vertex indices with multiplicities."""

    indices: np.ndarray
    multiplicity: np.ndarray

    @property
    def N(self) -> int:
        return int(self.multiplicity.sum())


def snap_points(mesh: SphereMesh, points, multiplicity=None) -> StringPoints:
    """Snap unit vectors to their nearest vertices.

    Points sharing a vertex must be declared once with a multiplicity;
    otherwise :class:`CoincidentPointsUnresolvable` is raised.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != 3:
        raise ParameterError("points must be 3-vectors")
    pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    mult = np.ones(len(pts), dtype=int) if multiplicity is None else np.asarray(multiplicity, dtype=int)
    if mult.shape != (len(pts),) or np.any(mult < 1):
        raise ParameterError("multiplicities must be positive integers, one per point")
    idx = np.argmax(pts @ mesh.vertices.T, axis=1)
    if len(np.unique(idx)) != len(idx):
        raise CoincidentPointsUnresolvable(
            "distinct points snap to the same vertex; declare them once with a multiplicity"
        )
    return StringPoints(indices=idx, multiplicity=mult)
