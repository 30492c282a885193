"""Differentiable deferred-shading first pass.

rasterize() produces per-pixel triangle ids, perspective-correct barycentrics
and depth. interpolate_attributes() turns covered pixels into world positions,
normals and view directions with hand-derived gradients w.r.t. vertex
positions (pixel-to-triangle assignment held fixed). silhouette_mask()
produces a coverage mask whose values vary continuously under vertex motion
inside a one-pixel band around silhouette edges, yielding the mask gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage as ndi

from .camera import Camera, project, project_backward
from .mesh import Mesh, edge_face_map, vertex_normals_backward

NEAR_PLANE = 1e-3
BACKGROUND = -1


def _cross2(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


@dataclass
class GBuffer:
    """Per-pixel rasterization output. position/normal/view_dir are filled by
    interpolate_attributes; mask is filled by silhouette_mask."""

    face_id: np.ndarray  # (H, W) int, BACKGROUND where uncovered
    bary: np.ndarray  # (H, W, 3) barycentrics w.r.t. the original triangle
    depth: np.ndarray  # (H, W) camera-space z, +inf background
    camera: Camera
    width: int
    height: int
    position: np.ndarray | None = None
    normal: np.ndarray | None = None
    view_dir: np.ndarray | None = None
    mask: np.ndarray | None = None

    @property
    def coverage(self) -> np.ndarray:
        return (self.face_id != BACKGROUND).astype(np.float64)


def _clip_triangles(xc: np.ndarray, faces: np.ndarray):
    """Clip camera-space triangles against z = NEAR_PLANE.

    Yields (face_id, corners_cam (k,3), corner_bary (k,3)) fragments with
    k = 3 corners, fan-triangulated if clipping produced a quad. corner_bary
    holds each corner's barycentric coordinates in the original triangle.
    """
    z = xc[:, 2]
    frags = []
    eye = np.eye(3)
    for fi, f in enumerate(faces):
        zi = z[f]
        if np.all(zi > NEAR_PLANE):
            frags.append((fi, xc[f], eye))
            continue
        if np.all(zi <= NEAR_PLANE):
            continue
        # Sutherland-Hodgman against the near plane, carrying barycentrics
        poly = [(xc[f[k]], eye[k]) for k in range(3)]
        out = []
        for k in range(3):
            cur, nxt = poly[k], poly[(k + 1) % 3]
            cin = cur[0][2] > NEAR_PLANE
            nin = nxt[0][2] > NEAR_PLANE
            if cin:
                out.append(cur)
            if cin != nin:
                a = (NEAR_PLANE - cur[0][2]) / (nxt[0][2] - cur[0][2])
                out.append(
                    (cur[0] + a * (nxt[0] - cur[0]), cur[1] + a * (nxt[1] - cur[1]))
                )
        for k in range(1, len(out) - 1):
            frags.append(
                (
                    fi,
                    np.stack([out[0][0], out[k][0], out[k + 1][0]]),
                    np.stack([out[0][1], out[k][1], out[k + 1][1]]),
                )
            )
    return frags


def rasterize(mesh: Mesh, camera: Camera, resolution=None) -> GBuffer:
    """Depth-correct rasterization at pixel centers.

    Ties at equal depth resolve to the lowest triangle id; back-facing
    triangles are drawn too (no culling). Deterministic.
    """
    if resolution is None:
        width, height = camera.width, camera.height
    else:
        width, height = resolution
    face_id = np.full((height, width), BACKGROUND, dtype=np.int64)
    bary = np.zeros((height, width, 3))
    depth = np.full((height, width), np.inf)

    if mesh.n_faces == 0:
        return GBuffer(face_id, bary, depth, camera, width, height)

    xc = mesh.vertices @ camera.R.T + camera.t
    K = camera.K
    for fi, corners, corner_bary in _clip_triangles(xc, mesh.faces):
        p = corners @ K.T
        z = corners[:, 2]
        pix = p[:, :2] / p[:, 2:3]

        lo = np.ceil(np.min(pix, axis=0) - 0.5).astype(int)
        hi = np.floor(np.max(pix, axis=0) - 0.5).astype(int)
        x0, y0 = np.maximum(lo, 0)
        x1 = min(hi[0], width - 1)
        y1 = min(hi[1], height - 1)
        if x1 < x0 or y1 < y0:
            continue

        area2 = _cross2(pix[1] - pix[0], pix[2] - pix[0])
        if abs(area2) < 1e-14:
            continue

        us = np.arange(x0, x1 + 1) + 0.5
        vs = np.arange(y0, y1 + 1) + 0.5
        U, V = np.meshgrid(us, vs)
        lam = np.empty((y1 - y0 + 1, x1 - x0 + 1, 3))
        for k in range(3):
            a, b = pix[(k + 1) % 3], pix[(k + 2) % 3]
            lam[..., k] = ((b[0] - a[0]) * (V - a[1]) - (b[1] - a[1]) * (U - a[0]))
        lam /= area2
        inside = np.all(lam >= 0.0, axis=-1)
        if not inside.any():
            continue

        li = lam / z[None, None, :]
        denom = li.sum(axis=-1)
        zpix = 1.0 / denom
        b_persp = li / denom[..., None]
        orig_b = b_persp @ corner_bary

        sub_depth = depth[y0 : y1 + 1, x0 : x1 + 1]
        win = inside & (zpix < sub_depth)
        sub_depth[win] = zpix[win]
        face_id[y0 : y1 + 1, x0 : x1 + 1][win] = fi
        bary[y0 : y1 + 1, x0 : x1 + 1][win] = orig_b[win]

    return GBuffer(face_id, bary, depth, camera, width, height)


@dataclass
class InterpolationContext:
    """Saved forward state for the attribute-gradient pass."""

    pixels: np.ndarray  # (p, 2) row, col of interpolated pixels
    faces: np.ndarray  # (p, 3) vertex ids
    A_inv_T: np.ndarray  # (p, 3, 3)
    y: np.ndarray  # (p, 3) = (t, u, w)
    d: np.ndarray  # (p, 3) ray directions (cam z = 1)
    n_tilde: np.ndarray  # (p, 3) unnormalized interpolated normals
    vnormals: np.ndarray  # (n, 3) vertex normals used
    mesh: Mesh


def interpolate_attributes(gbuffer: GBuffer, mesh: Mesh, vnormals: np.ndarray,
                           pixels: np.ndarray | None = None):
    """Fill position / normal / view_dir for covered pixels.

    Positions come from exact ray-triangle intersection of the pixel-center
    ray with the assigned triangle, which makes the gradients exact under a
    fixed pixel-to-triangle assignment. Returns (gbuffer, ctx); pass ctx and
    upstream gradients to interpolate_backward.
    """
    cam = gbuffer.camera
    if pixels is None:
        rows, cols = np.nonzero(gbuffer.face_id != BACKGROUND)
        pixels = np.stack([rows, cols], axis=1)
    else:
        pixels = np.asarray(pixels)
    if gbuffer.position is None:
        gbuffer.position = np.zeros((gbuffer.height, gbuffer.width, 3))
        gbuffer.normal = np.zeros((gbuffer.height, gbuffer.width, 3))
        gbuffer.view_dir = np.zeros((gbuffer.height, gbuffer.width, 3))

    if len(pixels) == 0:
        ctx = InterpolationContext(
            pixels, np.zeros((0, 3), np.int64), np.zeros((0, 3, 3)),
            np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3)), vnormals, mesh,
        )
        return gbuffer, ctx

    rows, cols = pixels[:, 0], pixels[:, 1]
    fids = gbuffer.face_id[rows, cols]
    if np.any(fids == BACKGROUND):
        raise ValueError("requested interpolation at background pixels")
    F = mesh.faces[fids]
    V = mesh.vertices
    o = cam.center
    pix_centers = np.stack([cols + 0.5, rows + 0.5], axis=1).astype(np.float64)
    d = cam.ray_directions(pix_centers)

    v0, v1, v2 = V[F[:, 0]], V[F[:, 1]], V[F[:, 2]]
    A = np.stack([-d, v1 - v0, v2 - v0], axis=2)  # columns
    y = np.linalg.solve(A, (o - v0)[..., None])[..., 0]
    t, u, w = y[:, 0], y[:, 1], y[:, 2]
    x = o + t[:, None] * d

    b = np.stack([1.0 - u - w, u, w], axis=1)
    n0, n1, n2 = vnormals[F[:, 0]], vnormals[F[:, 1]], vnormals[F[:, 2]]
    n_tilde = b[:, 0:1] * n0 + b[:, 1:2] * n1 + b[:, 2:3] * n2
    n_len = np.linalg.norm(n_tilde, axis=1, keepdims=True)
    n_len = np.where(n_len < 1e-14, 1.0, n_len)
    n = n_tilde / n_len

    omega = -d / np.linalg.norm(d, axis=1, keepdims=True)

    gbuffer.position[rows, cols] = x
    gbuffer.normal[rows, cols] = n
    gbuffer.view_dir[rows, cols] = omega

    ctx = InterpolationContext(
        pixels, F, np.linalg.inv(A).transpose(0, 2, 1), y, d, n_tilde, vnormals, mesh,
    )
    return gbuffer, ctx


def interpolate_backward(ctx: InterpolationContext, grad_x: np.ndarray,
                         grad_n: np.ndarray) -> np.ndarray:
    """dL/dV from per-pixel dL/dx and dL/dn (both (p, 3)).

    The view direction is a pure function of the fixed pixel ray, so it
    carries no vertex gradient.
    """
    mesh = ctx.mesh
    grad_V = np.zeros_like(mesh.vertices)
    if len(ctx.pixels) == 0:
        return grad_V
    F = ctx.faces
    y = ctx.y
    u, w = y[:, 1], y[:, 2]
    b = np.stack([1.0 - u - w, u, w], axis=1)

    # normal interpolation: n = n_tilde / |n_tilde|
    n_len = np.linalg.norm(ctx.n_tilde, axis=1, keepdims=True)
    n_len = np.where(n_len < 1e-14, 1.0, n_len)
    n = ctx.n_tilde / n_len
    g_ntilde = (grad_n - n * np.sum(grad_n * n, axis=1, keepdims=True)) / n_len

    # gradient into the per-vertex normals (chained through the 1-rings below)
    grad_vn = np.zeros_like(ctx.vnormals)
    for k in range(3):
        np.add.at(grad_vn, F[:, k], b[:, k:k+1] * g_ntilde)

    # gradient into barycentrics from the normal interpolation
    nk = ctx.vnormals[F]  # (p, 3, 3)
    g_b = np.einsum("pkj,pj->pk", nk, g_ntilde)

    # x = o + t d: only t receives the position gradient
    g_t = np.sum(grad_x * ctx.d, axis=1)
    g_y = np.stack([g_t, g_b[:, 1] - g_b[:, 0], g_b[:, 2] - g_b[:, 0]], axis=1)

    # ray-triangle solve backward: dL/dv_k = -b_k * (A^-T g_y)
    M = np.einsum("pij,pj->pi", ctx.A_inv_T, g_y)
    for k in range(3):
        np.add.at(grad_V, F[:, k], -b[:, k:k+1] * M)

    grad_V += vertex_normals_backward(mesh, grad_vn)
    return grad_V


@dataclass
class SilhouetteContext:
    pixels: np.ndarray  # (p, 2) rows, cols of band pixels with live gradient
    verts_a: np.ndarray  # (p,) vertex ids of the edge start
    verts_b: np.ndarray
    ds_dpa: np.ndarray  # (p, 2) d(signed distance)/d(projected endpoint a)
    ds_dpb: np.ndarray
    camera: Camera
    mesh: Mesh


def _front_facing(pix: np.ndarray, behind: np.ndarray, faces: np.ndarray):
    """Screen-space orientation sign per face; 0 for unusable faces."""
    ok = ~(behind[faces[:, 0]] | behind[faces[:, 1]] | behind[faces[:, 2]])
    p0, p1, p2 = pix[faces[:, 0]], pix[faces[:, 1]], pix[faces[:, 2]]
    area = _cross2(p1 - p0, p2 - p0)
    sign = np.sign(area)
    sign[~ok] = 0
    return sign


def silhouette_edges(mesh: Mesh, camera: Camera):
    """Edges where one adjacent face is front-facing and the other is
    back-facing, plus boundary edges. Returns (edge array (k, 2),
    opposite-vertex array (k,)) with the opposite vertex taken from the
    front-facing side."""
    pix, _, behind = project(camera, mesh.vertices)
    sign = _front_facing(pix, behind, mesh.faces)
    ef = edge_face_map(mesh.faces)
    edges = []
    opposite = []
    for (a, b), fl in sorted(ef.items()):
        if behind[a] or behind[b]:
            continue
        if len(fl) == 1:
            ref = fl[0]
            if sign[ref] == 0:
                continue
        elif len(fl) == 2:
            s0, s1 = sign[fl[0]], sign[fl[1]]
            if s0 == 0 or s1 == 0 or s0 == s1:
                continue
            # orient from the face that is front-facing in screen space
            # (positive area under our projection convention)
            ref = fl[0] if s0 > 0 else fl[1]
        else:
            continue
        opp = next(int(v) for v in mesh.faces[ref] if v not in (a, b))
        edges.append((a, b))
        opposite.append(opp)
    return np.array(edges, dtype=np.int64).reshape(-1, 2), np.array(opposite, dtype=np.int64)


def silhouette_mask(mesh: Mesh, camera: Camera, resolution=None,
                    gbuffer: GBuffer | None = None):
    """Antialiased coverage mask and the context for its vertex gradients.

    Interior and background pixels are exactly 1 and 0; pixels in a one-pixel
    band around projected silhouette edges blend linearly with the signed
    distance to the nearest edge.
    """
    if gbuffer is None:
        gbuffer = rasterize(mesh, camera, resolution)
    H, W = gbuffer.height, gbuffer.width
    B = gbuffer.coverage
    mask = B.copy()

    cover = B > 0.5
    eligible = ndi.binary_dilation(cover) & ~ndi.binary_erosion(
        cover, border_value=1
    )

    edges, opposite = silhouette_edges(mesh, camera)
    ctx = SilhouetteContext(
        np.zeros((0, 2), np.int64), np.zeros(0, np.int64), np.zeros(0, np.int64),
        np.zeros((0, 2)), np.zeros((0, 2)), camera, mesh,
    )
    if len(edges) == 0:
        gbuffer.mask = mask
        return mask, ctx

    pix, _, _ = project(camera, mesh.vertices)
    best_abs = np.full((H, W), np.inf)
    best_s = np.zeros((H, W))
    best_edge = np.full((H, W), -1, dtype=np.int64)

    for ei, (a, b) in enumerate(edges):
        p0, p1 = pix[a], pix[b]
        e = p1 - p0
        L = np.hypot(e[0], e[1])
        if L < 1e-9:
            continue
        po = pix[opposite[ei]]
        sigma = np.sign(_cross2(e, po - p0))
        if sigma == 0:
            continue
        x0 = max(int(np.floor(min(p0[0], p1[0]) - 1.0)), 0)
        x1 = min(int(np.ceil(max(p0[0], p1[0]) + 1.0)), W - 1)
        y0 = max(int(np.floor(min(p0[1], p1[1]) - 1.0)), 0)
        y1 = min(int(np.ceil(max(p0[1], p1[1]) + 1.0)), H - 1)
        if x1 < x0 or y1 < y0:
            continue
        sub_el = eligible[y0 : y1 + 1, x0 : x1 + 1]
        if not sub_el.any():
            continue
        us = np.arange(x0, x1 + 1) + 0.5
        vs = np.arange(y0, y1 + 1) + 0.5
        U, V = np.meshgrid(us, vs)
        ax = U - p0[0]
        ay = V - p0[1]
        tau = (ax * e[0] + ay * e[1]) / (L * L)
        s = sigma * (e[0] * ay - e[1] * ax) / L
        cand = sub_el & (tau >= 0.0) & (tau <= 1.0) & (np.abs(s) < 0.5)
        if not cand.any():
            continue
        sub_abs = best_abs[y0 : y1 + 1, x0 : x1 + 1]
        win = cand & (np.abs(s) < sub_abs)
        sub_abs[win] = np.abs(s)[win]
        best_s[y0 : y1 + 1, x0 : x1 + 1][win] = s[win]
        best_edge[y0 : y1 + 1, x0 : x1 + 1][win] = ei

    rows, cols = np.nonzero(best_edge >= 0)
    if len(rows):
        s = best_s[rows, cols]
        mask[rows, cols] = np.clip(0.5 + s, 0.0, 1.0)

        eids = best_edge[rows, cols]
        a = edges[eids, 0]
        b = edges[eids, 1]
        p0 = pix[a]
        p1 = pix[b]
        e = p1 - p0
        L = np.hypot(e[:, 0], e[:, 1])
        po = pix[opposite[eids]]
        sigma = np.sign(_cross2(e, po - p0))
        q = np.stack([cols + 0.5, rows + 0.5], axis=1).astype(np.float64)
        av = q - p0
        c = e[:, 0] * av[:, 1] - e[:, 1] * av[:, 0]
        # s = sigma * c / L
        dc_dp1 = np.stack([av[:, 1], -av[:, 0]], axis=1)
        dc_dp0 = np.stack([-av[:, 1] + e[:, 1], av[:, 0] - e[:, 0]], axis=1)
        dL_dp1 = e / L[:, None]
        dL_dp0 = -dL_dp1
        f = (sigma / L**2)[:, None]
        ds_dpa = f * (dc_dp0 * L[:, None] - c[:, None] * dL_dp0)
        ds_dpb = f * (dc_dp1 * L[:, None] - c[:, None] * dL_dp1)

        ctx = SilhouetteContext(
            np.stack([rows, cols], axis=1), a, b, ds_dpa, ds_dpb, camera, mesh,
        )
    gbuffer.mask = mask
    return mask, ctx


def silhouette_backward(ctx: SilhouetteContext, grad_mask: np.ndarray) -> np.ndarray:
    """dL/dV from dL/d(mask image)."""
    grad_V = np.zeros_like(ctx.mesh.vertices)
    if len(ctx.pixels) == 0:
        return grad_V
    g = grad_mask[ctx.pixels[:, 0], ctx.pixels[:, 1]]
    g_pa = g[:, None] * ctx.ds_dpa
    g_pb = g[:, None] * ctx.ds_dpb
    # accumulate pixel-space gradients per vertex, then one projection chain
    ids = np.concatenate([ctx.verts_a, ctx.verts_b])
    g_pix = np.concatenate([g_pa, g_pb])
    uniq, inv = np.unique(ids, return_inverse=True)
    acc = np.zeros((len(uniq), 2))
    np.add.at(acc, inv, g_pix)
    grad_pts = project_backward(ctx.camera, ctx.mesh.vertices[uniq], acc)
    np.add.at(grad_V, uniq, grad_pts)
    return grad_V
