"""Procedural test shapes: icosahedron, icospheres, bumpy blobs, grids."""

from __future__ import annotations

import numpy as np

from .mesh import Mesh


def icosahedron() -> Mesh:
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    return Mesh(verts, faces)


def subdivide(mesh: Mesh) -> Mesh:
    """One step of 1-to-4 loop-style topological subdivision (midpoint split)."""
    V = mesh.vertices
    F = mesh.faces
    midpoint: dict[tuple[int, int], int] = {}
    new_verts = [v for v in V]

    def mid(a: int, b: int) -> int:
        key = (a, b) if a < b else (b, a)
        if key not in midpoint:
            midpoint[key] = len(new_verts)
            new_verts.append(0.5 * (V[a] + V[b]))
        return midpoint[key]

    new_faces = []
    for a, b, c in F:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
    return Mesh(np.array(new_verts), np.array(new_faces, dtype=np.int64))


def icosphere(subdivisions: int = 2, radius: float = 1.0) -> Mesh:
    mesh = icosahedron()
    for _ in range(subdivisions):
        mesh = subdivide(mesh)
        mesh.vertices /= np.linalg.norm(mesh.vertices, axis=1, keepdims=True)
    return Mesh(mesh.vertices * radius, mesh.faces)


def blob_radius(directions: np.ndarray, base_radius: float = 0.5,
                bumps=None) -> np.ndarray:
    """Radial function of a bumpy blob: base radius plus smooth Gaussian
    bumps centered at unit directions."""
    if bumps is None:
        bumps = default_blob_bumps()
    d = np.asarray(directions, dtype=np.float64)
    r = np.full(d.shape[:-1], base_radius)
    for center, amplitude, width in bumps:
        cosang = d @ np.asarray(center)
        r = r + amplitude * np.exp((cosang - 1.0) / width)
    return r


def default_blob_bumps():
    s3 = 1.0 / np.sqrt(3.0)
    return [
        (np.array([1.0, 0.0, 0.0]), 0.12, 0.05),
        (np.array([0.0, 1.0, 0.0]), -0.08, 0.08),
        (np.array([-s3, s3, s3]), 0.10, 0.06),
        (np.array([0.0, -s3 * np.sqrt(2), -s3]), 0.09, 0.07),
    ]


def blob(subdivisions: int = 4, base_radius: float = 0.5, bumps=None) -> Mesh:
    """Sphere with smooth radial bumps, as a densely tessellated mesh."""
    sphere = icosphere(subdivisions, 1.0)
    dirs = sphere.vertices / np.linalg.norm(sphere.vertices, axis=1, keepdims=True)
    r = blob_radius(dirs, base_radius, bumps)
    return Mesh(dirs * r[:, None], sphere.faces)


def planar_grid(nx: int, ny: int, extent: float = 1.0) -> Mesh:
    """Flat triangulated grid in the z=0 plane."""
    xs = np.linspace(-extent, extent, nx)
    ys = np.linspace(-extent, extent, ny)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = np.stack([X.ravel(), Y.ravel(), np.zeros(nx * ny)], axis=1)
    faces = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            a = i * ny + j
            b = (i + 1) * ny + j
            faces.append([a, b, a + 1])
            faces.append([b, b + 1, a + 1])
    return Mesh(verts, np.array(faces, dtype=np.int64))
