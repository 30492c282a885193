"""Axis-aligned scalar grids and iso-surface extraction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from skimage import measure

from .mesh import Mesh


class EmptySurfaceError(ValueError):
    """The iso-surface does not intersect the grid."""


@dataclass
class ScalarGrid:
    """Scalar values sampled at grid nodes.

    values has shape (nx, ny, nz); node (i, j, k) sits at
    bounds_min + (i, j, k) * spacing with the last node on bounds_max.
    """

    values: np.ndarray
    bounds_min: np.ndarray
    bounds_max: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.bounds_min = np.asarray(self.bounds_min, dtype=np.float64).reshape(3)
        self.bounds_max = np.asarray(self.bounds_max, dtype=np.float64).reshape(3)
        if self.values.ndim != 3 or min(self.values.shape) < 2:
            raise ValueError("grid needs at least 2 nodes per axis")
        if not np.all(self.bounds_min < self.bounds_max):
            raise ValueError("bounds_min must be componentwise below bounds_max")

    @property
    def resolution(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def spacing(self) -> np.ndarray:
        return (self.bounds_max - self.bounds_min) / (np.array(self.values.shape) - 1)

    def node_coordinates(self) -> np.ndarray:
        """All node positions, shape (nx, ny, nz, 3)."""
        axes = [
            np.linspace(self.bounds_min[d], self.bounds_max[d], self.values.shape[d])
            for d in range(3)
        ]
        X, Y, Z = np.meshgrid(*axes, indexing="ij")
        return np.stack([X, Y, Z], axis=-1)


def marching_cubes(grid: ScalarGrid, iso_level: float) -> Mesh:
    """Extract the iso-surface as a closed triangle mesh.

    With the occupancy convention inside=1, the output is oriented outward
    (normals point toward lower scalar values).
    """
    vmin, vmax = grid.values.min(), grid.values.max()
    if not (vmin < iso_level < vmax):
        raise EmptySurfaceError(
            f"iso level {iso_level} outside value range [{vmin}, {vmax}]"
        )
    verts, faces, _, _ = measure.marching_cubes(
        grid.values, level=iso_level, spacing=tuple(grid.spacing)
    )
    verts = verts + grid.bounds_min
    # skimage winds faces with inward-pointing CCW normals for inside=1;
    # flip to our outward convention
    faces = faces[:, [0, 2, 1]]
    return Mesh(verts, faces)
