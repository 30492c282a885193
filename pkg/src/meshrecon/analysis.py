"""Evaluation metrics and shader analyses.

Chamfer-L1 and mesh-to-mesh surface distance quantify reconstruction quality
against reference geometry; mask IoU checks silhouettes per view. The shader
analyses reuse a trained model for novel-view synthesis, PCA of its
positional features, and feature-replacement material editing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .camera import Camera, View
from .closest_point import SurfaceProjector
from .mesh import Mesh, vertex_normals
from .raster import interpolate_attributes, rasterize, silhouette_mask
from .shader import (
    ShaderParams,
    extract_positional_features,
    shade_from_features,
)


def chamfer_l1(points_a: np.ndarray, points_b: np.ndarray) -> dict[str, float]:
    """Directed mean nearest-neighbor distances and their symmetric mean."""
    a = np.atleast_2d(points_a)
    b = np.atleast_2d(points_b)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("chamfer distance needs two non-empty point sets")
    d_ab = cKDTree(b).query(a)[0]
    d_ba = cKDTree(a).query(b)[0]
    a_to_b = float(d_ab.mean())
    b_to_a = float(d_ba.mean())
    return {"a_to_b": a_to_b, "b_to_a": b_to_a,
            "symmetric": 0.5 * (a_to_b + b_to_a)}


def sample_surface(mesh: Mesh, n: int, seed: int = 0) -> np.ndarray:
    """Uniform area-weighted point sample of the surface, (n, 3)."""
    rng = np.random.default_rng(seed)
    v = mesh.vertices[mesh.faces]
    areas = 0.5 * np.linalg.norm(
        np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)
    total = areas.sum()
    if total <= 0:
        raise ValueError("mesh has zero surface area")
    fid = rng.choice(len(areas), size=n, p=areas / total)
    # uniform barycentric via the square-root trick
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    b = np.stack([1.0 - r1, r1 * (1.0 - r2), r1 * r2], axis=1)
    return np.einsum("pk,pkj->pj", b, v[fid])


@dataclass
class SurfaceDistance:
    mean: float
    max: float
    hist_counts: np.ndarray
    hist_edges: np.ndarray


def surface_distance(mesh: Mesh, reference: Mesh, samples: int = 10_000,
                     seed: int = 0, bins: int = 32) -> SurfaceDistance:
    """Mean/max exact point-to-triangle distance from sampled points on mesh
    to the reference surface. Deterministic for a given seed."""
    pts = sample_surface(mesh, samples, seed)
    _, dist = SurfaceProjector(reference).project(pts, return_distance=True)
    counts, edges = np.histogram(dist, bins=bins)
    return SurfaceDistance(float(dist.mean()), float(dist.max()), counts, edges)


def symmetric_surface_distance(mesh_a: Mesh, mesh_b: Mesh, samples: int = 10_000,
                               seed: int = 0) -> float:
    d_ab = surface_distance(mesh_a, mesh_b, samples, seed).mean
    d_ba = surface_distance(mesh_b, mesh_a, samples, seed).mean
    return 0.5 * (d_ab + d_ba)


def mask_iou(mask_a: np.ndarray, mask_b: np.ndarray) -> float:
    a = np.asarray(mask_a) > 0.5
    b = np.asarray(mask_b) > 0.5
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def render_novel_view(mesh: Mesh, params: ShaderParams, camera: Camera):
    """Full deferred pipeline at an arbitrary camera.

    Returns (image, mask): the antialiased mask modulates the shaded color,
    and background pixels are exactly black.
    """
    gbuffer = rasterize(mesh, camera)
    mask, _ = silhouette_mask(mesh, camera, gbuffer=gbuffer)
    vnormals, _ = vertex_normals(mesh)
    gbuffer, _ = interpolate_attributes(gbuffer, mesh, vnormals)
    image = np.zeros((camera.height, camera.width, 3))
    covered = gbuffer.coverage > 0.5
    if covered.any():
        feats = extract_positional_features(params, gbuffer.position[covered])
        rgb = shade_from_features(params, feats,
                                  gbuffer.normal[covered],
                                  gbuffer.view_dir[covered])
        image[covered] = rgb * mask[covered, None]
    return image, mask


def pca_positional_features(params: ShaderParams, points: np.ndarray):
    """Top-2 PCA of the positional features at the given surface points.

    Returns (projections (p, 2), basis (2, D), explained variance fractions).
    Basis sign convention: the largest-magnitude entry of each component is
    positive, which makes the output deterministic.
    """
    points = np.atleast_2d(points)
    if len(points) < 3:
        raise ValueError("PCA needs at least 3 points")
    feats = extract_positional_features(params, points)
    centered = feats - feats.mean(axis=0)
    cov = centered.T @ centered / len(feats)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:2]
    basis = evecs[:, order].T
    for i in range(2):
        k = np.argmax(np.abs(basis[i]))
        if basis[i, k] < 0:
            basis[i] = -basis[i]
    proj = centered @ basis.T
    total = float(evals.sum())
    explained = evals[order] / total if total > 0 else np.zeros(2)
    return proj, basis, explained


@dataclass
class SphereSelector:
    center: tuple[float, float, float]
    radius: float

    def contains(self, x: np.ndarray) -> np.ndarray:
        return np.linalg.norm(x - np.asarray(self.center), axis=-1) <= self.radius


@dataclass
class HalfSpaceSelector:
    """Points x with (x - point) . normal >= 0."""

    point: tuple[float, float, float]
    normal: tuple[float, float, float]

    def contains(self, x: np.ndarray) -> np.ndarray:
        n = np.asarray(self.normal, dtype=np.float64)
        return (x - np.asarray(self.point)) @ n >= 0.0


@dataclass
class FeatureEdit:
    selector: object  # anything with contains(points) -> bool array
    replacement: np.ndarray  # (feature_dim,)
    blend: float = 1.0

    def __post_init__(self):
        self.replacement = np.asarray(self.replacement, dtype=np.float64).reshape(-1)
        if not 0.0 <= self.blend <= 1.0:
            raise ValueError("blend weight must be in [0, 1]")


def pick_feature(mesh: Mesh, params: ShaderParams, camera: Camera,
                 pixel: tuple[int, int]):
    """Positional feature at the surface point under pixel (row, col).

    Returns (feature, point); raises ValueError on background pixels.
    """
    gbuffer = rasterize(mesh, camera)
    row, col = int(pixel[0]), int(pixel[1])
    if not (0 <= row < camera.height and 0 <= col < camera.width):
        raise ValueError(f"pixel ({row}, {col}) outside the image")
    if gbuffer.face_id[row, col] < 0:
        raise ValueError(f"no surface under pixel ({row}, {col})")
    vnormals, _ = vertex_normals(mesh)
    gbuffer, _ = interpolate_attributes(gbuffer, mesh, vnormals,
                                        pixels=np.array([[row, col]]))
    point = gbuffer.position[row, col]
    return extract_positional_features(params, point[None])[0], point


def render_with_feature_edit(mesh: Mesh, params: ShaderParams, camera: Camera,
                             edit: FeatureEdit):
    """Render with positional features replaced inside the selected region.

    Pixels outside the selector are bit-identical to render_novel_view.
    """
    if edit.replacement.shape != (params.feature_dim,):
        raise ValueError(
            f"replacement feature has dimension {edit.replacement.shape[0]}, "
            f"shader expects {params.feature_dim}")
    gbuffer = rasterize(mesh, camera)
    mask, _ = silhouette_mask(mesh, camera, gbuffer=gbuffer)
    vnormals, _ = vertex_normals(mesh)
    gbuffer, _ = interpolate_attributes(gbuffer, mesh, vnormals)
    image = np.zeros((camera.height, camera.width, 3))
    covered = gbuffer.coverage > 0.5
    if covered.any():
        x = gbuffer.position[covered]
        feats = extract_positional_features(params, x)
        selected = np.asarray(edit.selector.contains(x), dtype=bool)
        if selected.any():
            feats[selected] = (edit.blend * edit.replacement
                               + (1.0 - edit.blend) * feats[selected])
        rgb = shade_from_features(params, feats,
                                  gbuffer.normal[covered],
                                  gbuffer.view_dir[covered])
        image[covered] = rgb * mask[covered, None]
    return image, mask


def evaluation_report(mesh: Mesh, reference: Mesh, views: list[View],
                      samples: int = 10_000, seed: int = 0) -> dict:
    """Geometry + silhouette metrics as a JSON-ready dict."""
    pa = sample_surface(mesh, samples, seed)
    pb = sample_surface(reference, samples, seed + 1)
    sd = surface_distance(mesh, reference, samples, seed)
    ious = []
    for v in views:
        cover = rasterize(mesh, v.camera).coverage
        ious.append({"view_id": v.view_id, "iou": mask_iou(cover, v.mask)})
    return {
        "v": 1,
        "chamfer": chamfer_l1(pa, pb),
        "mean_surface_distance": sd.mean,
        "max_surface_distance": sd.max,
        "iou_per_view": ious,
    }
