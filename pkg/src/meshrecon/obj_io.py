"""Plain-text OBJ reading and writing (v/f records only, 1-based indices)."""

from __future__ import annotations

import os
import tempfile

import numpy as np

from .mesh import Mesh


class ObjParseError(ValueError):
    pass


def load_mesh(path, triangulate_quads: bool = True) -> Mesh:
    """Load an OBJ file. Faces with slash-separated indices keep only the
    position index; quads are fan-triangulated unless triangulate_quads is
    False, in which case they are rejected."""
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ObjParseError(f"{path}:{lineno}: malformed vertex line")
                try:
                    vertices.append([float(p) for p in parts[1:4]])
                except ValueError as e:
                    raise ObjParseError(f"{path}:{lineno}: {e}") from e
            elif tag == "f":
                idx = []
                for tok in parts[1:]:
                    head = tok.split("/")[0]
                    try:
                        i = int(head)
                    except ValueError as e:
                        raise ObjParseError(f"{path}:{lineno}: bad face index {tok!r}") from e
                    idx.append(i - 1 if i > 0 else len(vertices) + i)
                if len(idx) < 3:
                    raise ObjParseError(f"{path}:{lineno}: face with fewer than 3 vertices")
                if len(idx) > 3 and not triangulate_quads:
                    raise ObjParseError(f"{path}:{lineno}: non-triangular face rejected")
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
            # other records (vn, vt, usemtl, ...) are ignored
    return Mesh(np.array(vertices, dtype=np.float64).reshape(-1, 3),
                np.array(faces, dtype=np.int64).reshape(-1, 3))


def save_mesh(mesh: Mesh, path) -> None:
    """Write an OBJ file atomically (temp file + rename)."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".obj.tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            for v in mesh.vertices:
                fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
            for f in mesh.faces:
                fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
