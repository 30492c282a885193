"""Isotropic remeshing: split / collapse / flip / tangential relaxation.

The standard incremental recipe with the usual 4/3 and 4/5 length thresholds.
Local edits that would produce a non-manifold configuration are skipped.
Relaxed vertices are projected back onto the input surface so the shape is
preserved while the triangulation is regularized.
"""

from __future__ import annotations

import numpy as np

from .closest_point import SurfaceProjector
from .mesh import Mesh, is_manifold


def remesh(mesh: Mesh, target_edge_length: float, iterations: int = 5) -> Mesh:
    """Remesh toward a uniform target edge length."""
    if target_edge_length <= 0:
        raise ValueError("target edge length must be positive")
    projector = SurfaceProjector(mesh)
    verts = [v.copy() for v in mesh.vertices]
    faces = [list(map(int, f)) for f in mesh.faces]

    high = 4.0 / 3.0 * target_edge_length
    low = 4.0 / 5.0 * target_edge_length

    for _ in range(iterations):
        verts, faces = _split_long_edges(verts, faces, high)
        verts, faces = _collapse_short_edges(verts, faces, low, high)
        faces = _flip_edges(verts, faces)
        verts = _tangential_relax(verts, faces, projector)

    return _compact(verts, faces)


def _edge_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def _build_edge_faces(faces):
    ef: dict[tuple[int, int], list[int]] = {}
    for fi, f in enumerate(faces):
        if f is None:
            continue
        a, b, c = f
        for u, v in ((a, b), (b, c), (c, a)):
            ef.setdefault(_edge_key(u, v), []).append(fi)
    return ef


def _boundary_vertices(faces) -> set[int]:
    bv: set[int] = set()
    for (a, b), fl in _build_edge_faces(faces).items():
        if len(fl) == 1:
            bv.add(a)
            bv.add(b)
    return bv


def _split_long_edges(verts, faces, high):
    for _ in range(10):
        ef = _build_edge_faces(faces)
        candidates = []
        for (a, b), fl in ef.items():
            d = float(np.linalg.norm(verts[a] - verts[b]))
            if d > high:
                candidates.append((d, a, b, fl))
        if not candidates:
            break
        candidates.sort(reverse=True)
        modified: set[int] = set()
        for _, a, b, fl in candidates:
            if any(fi in modified for fi in fl):
                continue
            m = len(verts)
            verts.append(0.5 * (verts[a] + verts[b]))
            for fi in fl:
                fa, fb, fc = faces[fi]
                # opposite vertex: the one that is neither a nor b
                corners = [fa, fb, fc]
                # rotate so the split edge is (corners[0], corners[1])
                for _r in range(3):
                    if {corners[0], corners[1]} == {a, b}:
                        break
                    corners = corners[1:] + corners[:1]
                p, q, r = corners
                faces[fi] = None
                modified.add(fi)
                faces.append([p, m, r])
                faces.append([m, q, r])
        faces = [f for f in faces if f is not None]
    return verts, faces


def _vertex_neighbors(faces, n_verts):
    nb: list[set[int]] = [set() for _ in range(n_verts)]
    for f in faces:
        if f is None:
            continue
        a, b, c = f
        nb[a].update((b, c))
        nb[b].update((a, c))
        nb[c].update((a, b))
    return nb


def _collapse_short_edges(verts, faces, low, high):
    ef = _build_edge_faces(faces)
    nb = _vertex_neighbors(faces, len(verts))
    boundary = _boundary_vertices(faces)
    vertex_faces: dict[int, set[int]] = {}
    for fi, f in enumerate(faces):
        for v in f:
            vertex_faces.setdefault(v, set()).add(fi)

    candidates = []
    for (a, b), fl in ef.items():
        d = float(np.linalg.norm(verts[a] - verts[b]))
        if d < low and len(fl) == 2:
            candidates.append((d, a, b))
    candidates.sort()

    dirty: set[int] = set()
    dead_faces: set[int] = set()
    for _, a, b in candidates:
        if a in dirty or b in dirty or a in boundary or b in boundary:
            continue
        shared = [fi for fi in vertex_faces.get(a, ()) & vertex_faces.get(b, ())
                  if fi not in dead_faces]
        if len(shared) != 2:
            continue
        opposite = set()
        for fi in shared:
            opposite.update(faces[fi])
        opposite -= {a, b}
        # link condition: shared neighborhood must be exactly the two
        # opposite vertices, otherwise the collapse pinches the surface
        if nb[a] & nb[b] != opposite or len(opposite) != 2:
            continue
        mid = 0.5 * (verts[a] + verts[b])
        # do not create overlong edges
        ring = (nb[a] | nb[b]) - {a, b}
        if any(np.linalg.norm(mid - verts[v]) > high for v in ring):
            continue

        verts[a] = mid
        for fi in shared:
            dead_faces.add(fi)
        for fi in list(vertex_faces.get(b, ())):
            if fi in dead_faces:
                continue
            faces[fi] = [a if v == b else v for v in faces[fi]]
            vertex_faces.setdefault(a, set()).add(fi)
        vertex_faces[b] = set()
        for v in ring:
            nb[v].discard(b)
            nb[v].add(a)
        nb[a] = ring
        nb[b] = set()
        dirty.update(ring | {a, b})

    faces = [f for fi, f in enumerate(faces) if fi not in dead_faces]
    return verts, faces


def _flip_edges(verts, faces):
    ef = _build_edge_faces(faces)
    valence = {}
    for f in faces:
        for v in f:
            valence[v] = valence.get(v, 0) + 0
    nb = _vertex_neighbors(faces, len(verts))
    valence = {v: len(s) for v, s in enumerate(nb)}
    boundary = _boundary_vertices(faces)

    dirty: set[int] = set()
    for (a, b), fl in ef.items():
        if len(fl) != 2 or a in dirty or b in dirty:
            continue
        if a in boundary or b in boundary:
            continue
        f1, f2 = fl
        if faces[f1] is None or faces[f2] is None:
            continue
        c = next(v for v in faces[f1] if v not in (a, b))
        d = next(v for v in faces[f2] if v not in (a, b))
        if c == d or d in nb[c]:
            continue

        def dev(v, delta=0):
            target = 4 if v in boundary else 6
            return (valence[v] + delta - target) ** 2

        before = dev(a) + dev(b) + dev(c) + dev(d)
        after = dev(a, -1) + dev(b, -1) + dev(c, +1) + dev(d, +1)
        if after >= before:
            continue

        # orient: f1 must traverse the edge a->b, else swap roles
        if not _has_directed_edge(faces[f1], a, b):
            a, b = b, a
        if not (_has_directed_edge(faces[f1], a, b) and _has_directed_edge(faces[f2], b, a)):
            continue
        new1 = [b, c, d]
        new2 = [c, a, d]
        if not _flip_geometry_ok(verts, faces[f1], faces[f2], new1, new2):
            continue

        faces[f1] = new1
        faces[f2] = new2
        nb[a].discard(b)
        nb[b].discard(a)
        nb[c].add(d)
        nb[d].add(c)
        for v in (a, b):
            valence[v] -= 1
        for v in (c, d):
            valence[v] += 1
        dirty.update((a, b, c, d))
    return [f for f in faces if f is not None]


def _has_directed_edge(face, u, v):
    a, b, c = face
    return (a, b) == (u, v) or (b, c) == (u, v) or (c, a) == (u, v)


def _tri_normal(verts, f):
    n = np.cross(verts[f[1]] - verts[f[0]], verts[f[2]] - verts[f[0]])
    l = np.linalg.norm(n)
    return n / l if l > 1e-14 else None


def _flip_geometry_ok(verts, old1, old2, new1, new2):
    o1, o2 = _tri_normal(verts, old1), _tri_normal(verts, old2)
    n1, n2 = _tri_normal(verts, new1), _tri_normal(verts, new2)
    if n1 is None or n2 is None or o1 is None or o2 is None:
        return False
    ref = o1 + o2
    return np.dot(n1, ref) > 1e-6 and np.dot(n2, ref) > 1e-6


def _tangential_relax(verts, faces, projector: SurfaceProjector, strength=1.0):
    n_verts = len(verts)
    V = np.array(verts)
    F = np.array(faces, dtype=np.int64)
    nb = _vertex_neighbors(faces, n_verts)
    boundary = _boundary_vertices(faces)

    cross = np.cross(V[F[:, 1]] - V[F[:, 0]], V[F[:, 2]] - V[F[:, 0]])
    s = np.zeros_like(V)
    for k in range(3):
        np.add.at(s, F[:, k], cross)
    norms = np.linalg.norm(s, axis=1, keepdims=True)
    norms[norms < 1e-14] = 1.0
    normals = s / norms

    new_V = V.copy()
    referenced = set(F.ravel().tolist())
    for v in range(n_verts):
        if v in boundary or not nb[v] or v not in referenced:
            continue
        g = V[list(nb[v])].mean(axis=0)
        d = g - V[v]
        d_t = d - normals[v] * np.dot(normals[v], d)
        new_V[v] = V[v] + strength * d_t
    moved = sorted(referenced - boundary)
    if moved:
        new_V[moved] = projector.project(new_V[moved])
    return [new_V[i] for i in range(n_verts)]


def _compact(verts, faces) -> Mesh:
    F = np.array(faces, dtype=np.int64).reshape(-1, 3)
    used = np.unique(F)
    remap = -np.ones(len(verts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    V = np.array(verts)[used]
    out = Mesh(V, remap[F])
    if not is_manifold(out):
        raise RuntimeError("remeshing produced a non-manifold mesh")
    return out
