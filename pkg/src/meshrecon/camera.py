"""Calibrated pinhole cameras, dataset ingestion, scene normalization, and
visual-hull initialization from multi-view masks."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.ndimage as ndi
from PIL import Image

from .grid import ScalarGrid, marching_cubes
from .mesh import Mesh

NEAR_EPS = 1e-6


class DatasetError(ValueError):
    pass


@dataclass
class Camera:
    """Pinhole camera: x_cam = R x + t, pixel = perspective(K x_cam).

    Pixel (row i, col j) has its center at continuous coordinates
    (u, v) = (j + 0.5, i + 0.5).
    """

    K: np.ndarray
    R: np.ndarray
    t: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=np.float64).reshape(3, 3)
        self.R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if np.abs(self.R @ self.R.T - np.eye(3)).max() > 1e-6:
            raise ValueError("camera rotation is not orthonormal")
        if np.linalg.det(self.R) < 0:
            raise ValueError("camera rotation has negative determinant")
        if abs(np.linalg.det(self.K)) < 1e-12:
            raise ValueError("camera intrinsics are not invertible")

    @property
    def center(self) -> np.ndarray:
        return -self.R.T @ self.t

    def world_points_to_camera(self, points: np.ndarray) -> np.ndarray:
        return points @ self.R.T + self.t

    def ray_directions(self, pixels: np.ndarray) -> np.ndarray:
        """World-space ray directions for continuous pixel coords (n, 2),
        scaled so the camera-space z component is 1."""
        uv1 = np.concatenate([pixels, np.ones((len(pixels), 1))], axis=1)
        d_cam = uv1 @ np.linalg.inv(self.K).T
        return d_cam @ self.R


def project(camera: Camera, points: np.ndarray):
    """Project world points to (pixels (n, 2), depth (n,), behind (n,) bool).

    depth is the camera-space z coordinate; points with depth <= NEAR_EPS are
    flagged behind-camera and get untrustworthy pixel values.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    xc = camera.world_points_to_camera(points)
    p = xc @ camera.K.T
    depth = xc[:, 2]
    behind = depth <= NEAR_EPS
    safe = np.where(behind, 1.0, p[:, 2])
    pix = p[:, :2] / safe[:, None]
    return pix, depth, behind


def project_jacobian(camera: Camera, points: np.ndarray) -> np.ndarray:
    """d(pixel)/d(world point): (n, 2, 3)."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    xc = camera.world_points_to_camera(points)
    p = xc @ camera.K.T
    z = p[:, 2]  # equals xc_z for K with last row (0,0,1)
    KR = camera.K @ camera.R
    # pixel_i = p_i / p_2 ; dp/dx = KR
    J = np.empty((len(points), 2, 3))
    for i in range(2):
        J[:, i, :] = (KR[i][None, :] * z[:, None] - p[:, i, None] * KR[2][None, :]) / (
            z[:, None] ** 2
        )
    return J


def project_backward(camera: Camera, points: np.ndarray, grad_pix: np.ndarray) -> np.ndarray:
    """Chain dL/d(pixel) (n, 2) back to dL/d(point) (n, 3)."""
    J = project_jacobian(camera, points)
    return np.einsum("nij,ni->nj", J, grad_pix)


@dataclass
class View:
    """One calibrated RGB image with a binary object mask."""

    camera: Camera
    image: np.ndarray  # (H, W, 3) in [0, 1]
    mask: np.ndarray  # (H, W) in {0.0, 1.0}
    view_id: int = 0

    def __post_init__(self):
        if self.image.shape[:2] != (self.camera.height, self.camera.width):
            raise ValueError("image dimensions do not match camera resolution")
        if self.mask.shape != self.image.shape[:2]:
            raise ValueError("mask dimensions do not match image")
        self.mask = (self.mask > 0.5).astype(np.float64)


@dataclass
class SceneNormalization:
    """Uniform scale + offset mapping world coordinates into the canonical
    cube centered at the origin with side length 2: x' = scale * x + offset."""

    scale: float
    offset: np.ndarray

    @classmethod
    def from_bbox(cls, bbox_min, bbox_max) -> "SceneNormalization":
        bbox_min = np.asarray(bbox_min, dtype=np.float64)
        bbox_max = np.asarray(bbox_max, dtype=np.float64)
        extent = bbox_max - bbox_min
        if np.any(extent <= 0):
            raise ValueError("degenerate bounding box")
        scale = 2.0 / extent.max()
        center = 0.5 * (bbox_min + bbox_max)
        return cls(scale=float(scale), offset=-scale * center)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * np.asarray(points) + self.offset

    def invert(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points) - self.offset) / self.scale

def load_image(path) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0
    return arr


def load_mask(path) -> np.ndarray:
    img = Image.open(path)
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[..., 0]
    return (arr > 127.5).astype(np.float64)


def load_dataset(path) -> tuple[list[View], SceneNormalization]:
    """Load a dataset directory: image_####.png, mask_####.png, cameras.json,
    bbox.json. Cameras are returned already transformed into the canonical
    cube coordinates."""
    root = Path(path)
    if not root.is_dir():
        raise DatasetError(f"dataset directory not found: {root}")
    cam_file = root / "cameras.json"
    bbox_file = root / "bbox.json"
    if not cam_file.exists():
        raise DatasetError(f"missing cameras.json in {root}")
    if not bbox_file.exists():
        raise DatasetError(f"missing bbox.json in {root}")
    cams = json.loads(cam_file.read_text())
    bbox = json.loads(bbox_file.read_text())
    norm = SceneNormalization.from_bbox(bbox["min"], bbox["max"])

    missing = []
    views = []
    for entry in cams["views"]:
        vid = int(entry["id"])
        img_path = root / f"image_{vid:04d}.png"
        mask_path = root / f"mask_{vid:04d}.png"
        if not img_path.exists():
            missing.append(f"image {vid}")
            continue
        if not mask_path.exists():
            missing.append(f"mask {vid}")
            continue
        camera = Camera(
            np.array(entry["K"], dtype=np.float64).reshape(3, 3),
            np.array(entry["R"], dtype=np.float64).reshape(3, 3),
            np.array(entry["t"], dtype=np.float64),
            int(entry["width"]),
            int(entry["height"]),
        )
        camera = normalize_camera(camera, norm)
        views.append(View(camera, load_image(img_path), load_mask(mask_path), vid))
    if missing:
        raise DatasetError("missing dataset files: " + ", ".join(missing))
    if not views:
        raise DatasetError(f"no views found in {root}")
    return views, norm


def normalize_camera(camera: Camera, norm: SceneNormalization) -> Camera:
    """Re-express a camera in normalized coordinates x' = s x + o."""
    # x_cam = R x + t with x = (x' - o)/s; scaling camera space by s keeps the
    # projection (projective invariance): R' = R, t' = s t - R o
    t_new = norm.scale * camera.t - camera.R @ norm.offset
    return Camera(camera.K, camera.R, t_new, camera.width, camera.height)


def visual_hull(views: list[View], resolution: int = 32,
                bounds_min=(-1.0, -1.0, -1.0), bounds_max=(1.0, 1.0, 1.0)) -> Mesh:
    """Mask-carved occupancy grid + marching cubes.

    A node survives only if it projects inside the mask of every view; nodes
    projecting outside any image are removed too. The surviving occupancy is
    dilated by one cell so the hull conservatively contains the true surface,
    then meshed at iso level 0.5.
    """
    if len(views) < 2:
        raise ValueError("visual hull needs at least 2 views")
    grid = ScalarGrid(np.zeros((resolution,) * 3), bounds_min, bounds_max)
    nodes = grid.node_coordinates().reshape(-1, 3)
    occ = np.ones(len(nodes), dtype=bool)
    for view in views:
        pix, depth, behind = project(view.camera, nodes)
        ix = np.floor(pix[:, 0]).astype(int)
        iy = np.floor(pix[:, 1]).astype(int)
        inside_img = (
            (~behind)
            & (ix >= 0) & (ix < view.camera.width)
            & (iy >= 0) & (iy < view.camera.height)
        )
        in_mask = np.zeros(len(nodes), dtype=bool)
        in_mask[inside_img] = view.mask[iy[inside_img], ix[inside_img]] > 0.5
        occ &= in_mask
    if not occ.any():
        raise ValueError(
            "visual hull is empty; check the bounding box and mask alignment"
        )
    occ3 = occ.reshape(grid.resolution)
    occ3 = ndi.binary_dilation(occ3)
    # pad with an empty border so the iso-surface closes even when occupancy
    # touches the grid boundary
    padded = np.pad(occ3.astype(np.float64), 1)
    spacing = grid.spacing
    pad_grid = ScalarGrid(
        padded,
        np.asarray(bounds_min) - spacing,
        np.asarray(bounds_max) + spacing,
    )
    return marching_cubes(pad_grid, 0.5)


def make_orbit_camera(azimuth_deg: float, elevation_deg: float, radius: float,
                      target, width: int, height: int,
                      focal: float | None = None) -> Camera:
    """Camera on an orbit around `target`, looking at it, world z up."""
    az = np.radians(azimuth_deg)
    el = np.radians(elevation_deg)
    target = np.asarray(target, dtype=np.float64).reshape(3)
    center = target + radius * np.array(
        [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)]
    )
    forward = target - center
    forward /= np.linalg.norm(forward)
    up = np.array([0.0, 0.0, 1.0])
    if abs(np.dot(forward, up)) > 0.999:
        up = np.array([0.0, 1.0, 0.0])
    right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    R = np.stack([right, down, forward])  # rows: camera x, y, z in world
    t = -R @ center
    if focal is None:
        focal = float(max(width, height))
    K = np.array(
        [[focal, 0, width / 2.0], [0, focal, height / 2.0], [0, 0, 1.0]]
    )
    return Camera(K, R, t, width, height)
