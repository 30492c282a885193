"""Point-to-triangle closest point queries against a fixed triangle soup."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .mesh import Mesh


def closest_point_on_triangles(points: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Closest point on each triangle for each point.

    points: (n, 3); tri: (n, 3, 3) one triangle per point. Returns (n, 3).
    Standard region classification (Ericson, Real-Time Collision Detection).
    """
    p = points
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ab = b - a
    ac = c - a
    ap = p - a

    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    result = np.empty_like(p)
    done = np.zeros(len(p), dtype=bool)

    def assign(mask, value):
        m = mask & ~done
        result[m] = value[m] if value.ndim == 2 else value
        done[m] = True

    assign((d1 <= 0) & (d2 <= 0), a)  # vertex a
    assign((d3 >= 0) & (d4 <= d3), b)  # vertex b
    assign((d6 >= 0) & (d5 <= d6), c)  # vertex c

    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = np.where(d1 - d3 != 0, d1 / (d1 - d3), 0.0)
    assign((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v_ab[:, None] * ab)  # edge ab

    vb = d5 * d2 - d1 * d6
    with np.errstate(divide="ignore", invalid="ignore"):
        w_ac = np.where(d2 - d6 != 0, d2 / (d2 - d6), 0.0)
    assign((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w_ac[:, None] * ac)  # edge ac

    va = d3 * d6 - d5 * d4
    denom_bc = (d4 - d3) + (d5 - d6)
    with np.errstate(divide="ignore", invalid="ignore"):
        w_bc = np.where(denom_bc != 0, (d4 - d3) / denom_bc, 0.0)
    assign((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0), b + w_bc[:, None] * (c - b))

    denom = va + vb + vc
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(denom != 0, vb / denom, 0.0)
        w = np.where(denom != 0, vc / denom, 0.0)
    assign(np.ones(len(p), dtype=bool), a + v[:, None] * ab + w[:, None] * ac)
    return result


class SurfaceProjector:
    """Closest-point queries against a mesh via a centroid k-d tree.

    Exact point-triangle distances are evaluated for the k nearest
    triangle centroids; k trades accuracy for speed.
    """

    def __init__(self, mesh: Mesh, k: int = 12):
        self.triangles = mesh.vertices[mesh.faces]  # (m, 3, 3)
        self.k = min(k, len(mesh.faces))
        self.tree = cKDTree(self.triangles.mean(axis=1))

    def project(self, points: np.ndarray, return_distance: bool = False):
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        _, idx = self.tree.query(points, k=self.k)
        idx = np.atleast_2d(idx)
        n, k = idx.shape
        flat_pts = np.repeat(points, k, axis=0)
        flat_tri = self.triangles[idx.ravel()]
        cp = closest_point_on_triangles(flat_pts, flat_tri).reshape(n, k, 3)
        d2 = np.sum((cp - points[:, None, :]) ** 2, axis=2)
        best = np.argmin(d2, axis=1)
        closest = cp[np.arange(n), best]
        if return_distance:
            return closest, np.sqrt(d2[np.arange(n), best])
        return closest
