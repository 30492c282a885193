"""Synthetic Lambertian test scenes with exact ground truth.

Spheres are ray-traced analytically per pixel; blob scenes rasterize a dense
reference mesh. Shading is diffuse with a single directional light plus an
ambient floor. Scenes can be kept in memory as calibrated views, or written
out as a dataset directory so the loaders and CLI see real files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .camera import Camera, View, make_orbit_camera
from .mesh import Mesh, vertex_normals
from .obj_io import save_mesh
from .raster import interpolate_attributes, rasterize
from .shapes import blob, icosphere


@dataclass
class SyntheticSceneSpec:
    kind: str = "sphere"  # "sphere" | "blob" | "two_material"
    radius: float = 0.7
    n_views: int = 16
    resolution: int = 128
    camera_radius: float = 3.0
    elevations: tuple[float, ...] = (-20.0, 20.0)
    focal_scale: float = 1.6  # focal length = focal_scale * resolution
    light_dir: tuple[float, float, float] = (0.4, -0.3, 0.85)
    ambient: float = 0.25
    intensity: float = 0.75
    albedo: tuple[float, float, float] = (0.85, 0.45, 0.3)
    albedo_b: tuple[float, float, float] = (0.2, 0.45, 0.9)  # two_material only
    blob_subdivisions: int = 5
    blob_bumps: tuple | None = None  # (direction, amplitude, width) triples
    headlight: bool = False  # light rides with each camera instead of fixed
    texture_scale: float = 0.0  # >0: sinusoidal albedo texture, rad/unit
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("sphere", "blob", "two_material"):
            raise ValueError(f"unknown scene kind {self.kind!r}")
        if self.n_views < 2:
            raise ValueError("need at least 2 views")

    @property
    def light(self) -> np.ndarray:
        l = np.asarray(self.light_dir, dtype=np.float64)
        return l / np.linalg.norm(l)


def scene_cameras(spec: SyntheticSceneSpec) -> list[Camera]:
    """A ring (or two) of inward-looking cameras around the origin."""
    cams = []
    res = spec.resolution
    focal = spec.focal_scale * res
    for i in range(spec.n_views):
        az = 360.0 * i / spec.n_views
        el = spec.elevations[i % len(spec.elevations)]
        cams.append(make_orbit_camera(az, el, spec.camera_radius,
                                      (0.0, 0.0, 0.0), res, res, focal))
    return cams


def _albedo_at(spec: SyntheticSceneSpec, x: np.ndarray) -> np.ndarray:
    a = np.broadcast_to(np.asarray(spec.albedo), x.shape).copy()
    if spec.kind == "two_material":
        b = np.asarray(spec.albedo_b)
        a[x[..., 2] > 0.0] = b
    if spec.texture_scale > 0.0:
        # smooth two-octave multiplicative texture: the fine octave gives
        # precise multi-view stereo signal, the coarse one keeps photometric
        # gradients informative under large misregistration
        w = spec.texture_scale
        t = 0.7 + sum(
            amp * np.sin(freq * x[..., i] + phase)
            for freq, amp in ((w, 0.0667), (w / 3.0, 0.0667))
            for i, phase in ((0, 1.0), (1, 2.0), (2, 3.0)))
        a = a * t[..., None]
    return a


def lambertian_rgb(spec: SyntheticSceneSpec, x: np.ndarray, n: np.ndarray,
                   light: np.ndarray | None = None) -> np.ndarray:
    """Diffuse shade for surface points x with unit normals n."""
    if light is None:
        light = spec.light
    ndotl = np.clip(np.sum(n * light, axis=-1, keepdims=True), 0.0, None)
    rgb = _albedo_at(spec, x) * (spec.ambient + spec.intensity * ndotl)
    return np.clip(rgb, 0.0, 1.0)


def _ray_sphere(origin: np.ndarray, dirs: np.ndarray, radius: float):
    """Smallest positive hit parameter per ray, NaN for misses."""
    a = np.sum(dirs * dirs, axis=-1)
    b = 2.0 * np.sum(dirs * origin, axis=-1)
    c = float(origin @ origin) - radius * radius
    disc = b * b - 4.0 * a * c
    hit = disc >= 0.0
    t = np.full(dirs.shape[:-1], np.nan)
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t_near = (-b - sq) / (2.0 * a)
    t[hit & (t_near > 0)] = t_near[hit & (t_near > 0)]
    return t


def _render_sphere_view(spec: SyntheticSceneSpec, camera: Camera, supersample: int = 4):
    """Analytic ray-traced image and supersampled coverage mask."""
    res = spec.resolution
    ss = supersample
    jj, ii = np.meshgrid(np.arange(res * ss), np.arange(res * ss))
    pix = np.stack([(jj.ravel() + 0.5) / ss, (ii.ravel() + 0.5) / ss], axis=1)
    dirs = camera.ray_directions(pix)
    o = camera.center
    t = _ray_sphere(o, dirs, spec.radius)
    cover = np.isfinite(t).reshape(res * ss, res * ss)
    frac = cover.reshape(res, ss, res, ss).mean(axis=(1, 3))
    mask = (frac > 0.5).astype(np.float64)

    # shade at pixel centers (cheaper than full supersampled color)
    jj, ii = np.meshgrid(np.arange(res), np.arange(res))
    pix = np.stack([jj.ravel() + 0.5, ii.ravel() + 0.5], axis=1)
    dirs = camera.ray_directions(pix)
    t = _ray_sphere(o, dirs, spec.radius)
    image = np.zeros((res * res, 3))
    hit = np.isfinite(t)
    x = o + t[hit, None] * dirs[hit]
    n = x / spec.radius
    image[hit] = lambertian_rgb(spec, x, n, light=_view_light(spec, camera))
    image = image.reshape(res, res, 3)
    image[mask < 0.5] = 0.0
    return image, mask


def _view_light(spec: SyntheticSceneSpec, camera: Camera) -> np.ndarray:
    """Light direction for one view: fixed, or riding with the camera."""
    if not spec.headlight:
        return spec.light
    c = np.asarray(camera.center, dtype=np.float64)
    return c / np.linalg.norm(c)


def _render_mesh_view(spec: SyntheticSceneSpec, mesh: Mesh, camera: Camera):
    gbuffer = rasterize(mesh, camera)
    vnormals, _ = vertex_normals(mesh)
    gbuffer, _ = interpolate_attributes(gbuffer, mesh, vnormals)
    mask = gbuffer.coverage.astype(np.float64)
    image = np.zeros((camera.height, camera.width, 3))
    covered = mask > 0.5
    image[covered] = lambertian_rgb(
        spec, gbuffer.position[covered], gbuffer.normal[covered],
        light=_view_light(spec, camera))
    return image, mask


def reference_mesh(spec: SyntheticSceneSpec) -> Mesh:
    """Exact (sphere) or dense reference geometry for the scene."""
    if spec.kind == "blob":
        return blob(subdivisions=spec.blob_subdivisions, base_radius=spec.radius,
                    bumps=spec.blob_bumps)
    return icosphere(subdivisions=4, radius=spec.radius)


def generate_views(spec: SyntheticSceneSpec) -> tuple[list[View], Mesh]:
    """Render the scene and return calibrated views plus the reference mesh.

    The scene lives directly in canonical cube coordinates, so the views can
    feed the optimizer without a normalization step.
    """
    ref = reference_mesh(spec)
    views = []
    for vid, cam in enumerate(scene_cameras(spec)):
        if spec.kind == "blob":
            image, mask = _render_mesh_view(spec, ref, cam)
        else:
            image, mask = _render_sphere_view(spec, cam)
        views.append(View(cam, image, mask, vid))
    return views, ref


def write_dataset(spec: SyntheticSceneSpec, path) -> Path:
    """Write images, masks, cameras.json, bbox.json and the reference mesh."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    views, ref = generate_views(spec)
    entries = []
    for v in views:
        img = Image.fromarray((np.clip(v.image, 0, 1) * 255).round().astype(np.uint8))
        img.save(root / f"image_{v.view_id:04d}.png")
        Image.fromarray((v.mask * 255).astype(np.uint8)).save(
            root / f"mask_{v.view_id:04d}.png")
        cam = v.camera
        entries.append({
            "id": v.view_id,
            "K": cam.K.tolist(),
            "R": cam.R.tolist(),
            "t": cam.t.tolist(),
            "width": cam.width,
            "height": cam.height,
        })
    (root / "cameras.json").write_text(json.dumps({"views": entries}, indent=1))
    # identity normalization: the scene is already inside the canonical cube
    (root / "bbox.json").write_text(
        json.dumps({"min": [-1.0, -1.0, -1.0], "max": [1.0, 1.0, 1.0]}))
    save_mesh(ref, root / "reference.obj")
    return root
