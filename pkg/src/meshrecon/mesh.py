"""Triangle mesh container, connectivity caches, and geometry regularization losses.

All loss functions return (value, gradient) pairs where the gradient is taken
with respect to the vertex positions. Gradients are exact (hand-derived), and
everything here is a pure function of its inputs.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

DEGENERATE_AREA_EPS = 1e-12


class NonManifoldError(ValueError):
    """Raised when an edge has more than two incident faces."""


@dataclass
class Mesh:
    """Triangle mesh: vertex positions (n, 3) and faces (m, 3) with CCW winding."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.faces.size:
            if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
                raise ValueError("face index out of range")
            f = self.faces
            if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
                raise ValueError("face references the same vertex twice")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def edges(self) -> np.ndarray:
        """Unique undirected edges (k, 2), sorted pairs in lexicographic order."""
        return unique_edges(self.faces)

    def mean_edge_length(self) -> float:
        e = self.edges
        d = self.vertices[e[:, 0]] - self.vertices[e[:, 1]]
        return float(np.linalg.norm(d, axis=1).mean())

    def copy(self) -> "Mesh":
        return Mesh(self.vertices.copy(), self.faces.copy())

    def connectivity_fingerprint(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.faces).tobytes()).hexdigest()


def unique_edges(faces: np.ndarray) -> np.ndarray:
    if len(faces) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0)


def edge_face_map(faces: np.ndarray) -> dict[tuple[int, int], list[int]]:
    """Map sorted edge tuple -> list of incident face indices."""
    m: dict[tuple[int, int], list[int]] = {}
    for fi, (a, b, c) in enumerate(faces):
        for u, v in ((a, b), (b, c), (c, a)):
            key = (u, v) if u < v else (v, u)
            m.setdefault(key, []).append(fi)
    return m


@dataclass
class ConnectivityCache:
    """Connectivity-derived quantities, valid for one mesh connectivity.

    The Laplacian is the row-normalized (umbrella) form L = I - D^-1 A, so
    (L V)_i is the vertex position minus the mean of its neighbors.
    """

    neighbors: list[np.ndarray]
    laplacian: sp.csr_matrix
    face_pairs: np.ndarray  # (k, 2) face indices sharing an edge
    vertex_faces: list[np.ndarray]
    fingerprint: str
    edge_faces: dict[tuple[int, int], list[int]] = field(repr=False, default_factory=dict)

    def check(self, mesh: Mesh) -> None:
        if mesh.connectivity_fingerprint() != self.fingerprint:
            raise ValueError("connectivity cache does not match mesh")


def build_connectivity(mesh: Mesh) -> ConnectivityCache:
    """Build adjacency, row-normalized graph Laplacian, and adjacent-face pairs.

    Raises NonManifoldError if any edge has more than two incident faces.
    """
    n = mesh.n_vertices
    ef = edge_face_map(mesh.faces)
    for edge, fl in ef.items():
        if len(fl) > 2:
            raise NonManifoldError(
                f"edge ({int(edge[0])}, {int(edge[1])}) has {len(fl)} incident "
                "faces (non-manifold)"
            )

    edges = np.array(sorted(ef.keys()), dtype=np.int64).reshape(-1, 2)
    neighbors: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        neighbors[a].append(int(b))
        neighbors[b].append(int(a))
    nbr_arrays = [np.array(sorted(nb), dtype=np.int64) for nb in neighbors]

    rows, cols, vals = [], [], []
    for i, nb in enumerate(nbr_arrays):
        rows.append(i)
        cols.append(i)
        vals.append(1.0)
        if len(nb):
            w = -1.0 / len(nb)
            for j in nb:
                rows.append(i)
                cols.append(int(j))
                vals.append(w)
        else:
            # isolated vertex: row is [.. 1 ..] minus nothing; zero it out so
            # delta_i = 0 by convention
            vals[-1] = 0.0
    lap = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    pairs = [fl for fl in ef.values() if len(fl) == 2]
    face_pairs = (
        np.array(sorted((min(p), max(p)) for p in pairs), dtype=np.int64).reshape(-1, 2)
    )

    vertex_faces: list[list[int]] = [[] for _ in range(n)]
    for fi, f in enumerate(mesh.faces):
        for v in f:
            vertex_faces[int(v)].append(fi)
    vf_arrays = [np.array(v, dtype=np.int64) for v in vertex_faces]

    return ConnectivityCache(
        neighbors=nbr_arrays,
        laplacian=lap,
        face_pairs=face_pairs,
        vertex_faces=vf_arrays,
        fingerprint=mesh.connectivity_fingerprint(),
        edge_faces=ef,
    )


def differential_coords(mesh: Mesh, cache: ConnectivityCache) -> np.ndarray:
    """Per-vertex delta_i = v_i - mean(neighbors of v_i). Shape (n, 3)."""
    cache.check(mesh)
    if any(len(nb) == 0 for nb in cache.neighbors):
        warnings.warn("mesh has isolated vertices; their differential coords are zero")
    return cache.laplacian @ mesh.vertices


def laplacian_loss(mesh: Mesh, cache: ConnectivityCache):
    """(1/n) sum ||delta_i||^2 and its gradient (2/n) L^T L V."""
    cache.check(mesh)
    n = mesh.n_vertices
    delta = cache.laplacian @ mesh.vertices
    loss = float(np.sum(delta * delta) / n)
    grad = (2.0 / n) * (cache.laplacian.T @ delta)
    return loss, grad


def face_cross_products(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    v0 = vertices[faces[:, 0]]
    v1 = vertices[faces[:, 1]]
    v2 = vertices[faces[:, 2]]
    return np.cross(v1 - v0, v2 - v0)


def face_normals(mesh: Mesh):
    """Unit face normals (m, 3) following CCW winding, plus a degenerate flag.

    Faces with area below DEGENERATE_AREA_EPS get a zero normal and are
    flagged; downstream loss terms must skip them.
    """
    c = face_cross_products(mesh.vertices, mesh.faces)
    norm = np.linalg.norm(c, axis=1)
    flagged = norm < 2.0 * DEGENERATE_AREA_EPS
    safe = np.where(flagged, 1.0, norm)
    normals = c / safe[:, None]
    normals[flagged] = 0.0
    return normals, flagged


def face_normals_backward(mesh: Mesh, grad_normals: np.ndarray) -> np.ndarray:
    """Accumulate dL/dV given dL/d(face normals). Degenerate faces contribute 0."""
    V, F = mesh.vertices, mesh.faces
    c = face_cross_products(V, F)
    norm = np.linalg.norm(c, axis=1)
    flagged = norm < 2.0 * DEGENERATE_AREA_EPS
    safe = np.where(flagged, 1.0, norm)
    n = c / safe[:, None]
    # d n / d c = (I - n n^T) / |c|
    g_c = (grad_normals - n * np.sum(grad_normals * n, axis=1, keepdims=True)) / safe[:, None]
    g_c[flagged] = 0.0
    e1 = V[F[:, 1]] - V[F[:, 0]]
    e2 = V[F[:, 2]] - V[F[:, 0]]
    # c = e1 x e2 ; dL/de1 = g_c x e2 * (-1)? use: d(e1 x e2)/de1 . g = e2 x g
    g_e1 = np.cross(e2, g_c)
    g_e2 = np.cross(g_c, e1)
    grad_V = np.zeros_like(V)
    np.add.at(grad_V, F[:, 1], g_e1)
    np.add.at(grad_V, F[:, 2], g_e2)
    np.add.at(grad_V, F[:, 0], -g_e1 - g_e2)
    return grad_V


def vertex_normals(mesh: Mesh):
    """Area-weighted vertex normals (n, 3), unit length.

    The area weighting comes for free: summing unnormalized face cross
    products weights each face normal by twice its area. Vertices whose
    incident faces are all degenerate fall back to (0, 0, 1) and are flagged.
    """
    c = face_cross_products(mesh.vertices, mesh.faces)
    s = np.zeros_like(mesh.vertices)
    for k in range(3):
        np.add.at(s, mesh.faces[:, k], c)
    norm = np.linalg.norm(s, axis=1)
    flagged = norm < 2.0 * DEGENERATE_AREA_EPS
    safe = np.where(flagged, 1.0, norm)
    normals = s / safe[:, None]
    normals[flagged] = np.array([0.0, 0.0, 1.0])
    return normals, flagged


def vertex_normals_backward(mesh: Mesh, grad_normals: np.ndarray) -> np.ndarray:
    """dL/dV given dL/d(vertex normals); flows into each vertex's 1-ring."""
    V, F = mesh.vertices, mesh.faces
    c = face_cross_products(V, F)
    s = np.zeros_like(V)
    for k in range(3):
        np.add.at(s, F[:, k], c)
    norm = np.linalg.norm(s, axis=1)
    flagged = norm < 2.0 * DEGENERATE_AREA_EPS
    safe = np.where(flagged, 1.0, norm)
    n = s / safe[:, None]
    g_s = (grad_normals - n * np.sum(grad_normals * n, axis=1, keepdims=True)) / safe[:, None]
    g_s[flagged] = 0.0
    # s_v = sum of incident face cross products -> each face receives the sum
    # of g_s over its three corners
    g_c = g_s[F[:, 0]] + g_s[F[:, 1]] + g_s[F[:, 2]]
    e1 = V[F[:, 1]] - V[F[:, 0]]
    e2 = V[F[:, 2]] - V[F[:, 0]]
    g_e1 = np.cross(e2, g_c)
    g_e2 = np.cross(g_c, e1)
    grad_V = np.zeros_like(V)
    np.add.at(grad_V, F[:, 1], g_e1)
    np.add.at(grad_V, F[:, 2], g_e2)
    np.add.at(grad_V, F[:, 0], -g_e1 - g_e2)
    return grad_V


def normal_consistency_loss(mesh: Mesh, cache: ConnectivityCache):
    """(1/|Fbar|) sum over adjacent face pairs of (1 - n_i . n_j)^2, with gradient."""
    cache.check(mesh)
    normals, flagged = face_normals(mesh)
    pairs = cache.face_pairs
    if len(pairs):
        keep = ~(flagged[pairs[:, 0]] | flagged[pairs[:, 1]])
        pairs = pairs[keep]
    if len(pairs) == 0:
        return 0.0, np.zeros_like(mesh.vertices)
    ni = normals[pairs[:, 0]]
    nj = normals[pairs[:, 1]]
    d = 1.0 - np.sum(ni * nj, axis=1)
    loss = float(np.mean(d * d))
    coef = (-2.0 / len(pairs)) * d
    grad_n = np.zeros_like(normals)
    np.add.at(grad_n, pairs[:, 0], coef[:, None] * nj)
    np.add.at(grad_n, pairs[:, 1], coef[:, None] * ni)
    return loss, face_normals_backward(mesh, grad_n)


def is_manifold(mesh: Mesh) -> bool:
    """Every edge has at most two incident faces and there are no duplicate faces."""
    f = np.sort(mesh.faces, axis=1)
    if len(np.unique(f, axis=0)) != len(f):
        return False
    for fl in edge_face_map(mesh.faces).values():
        if len(fl) > 2:
            return False
    return True
