"""Truncated SDF grids: rasterization, silhouettes, interior analysis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError, ParameterError

# Cell centers along one axis of a D^3 grid over [-1, 1]^3.
def cell_centers(resolution: int) -> np.ndarray:
    i = np.arange(resolution)
    return (-1.0 + (2.0 * i + 1.0) / resolution).astype(np.float64)


@dataclass
class TsdfGrid:
    """A D^3 field of signed distances clamped to [-tau, tau].

    ``values`` is float32 with axes (x, y, z); values are negative strictly
    inside the shape and positive outside.
    """

    resolution: int
    tau: float
    values: np.ndarray

    def __post_init__(self):
        d = self.resolution
        if self.values.shape != (d, d, d):
            raise DimensionError(
                f"TsdfGrid: values shape {self.values.shape} != ({d}, {d}, {d})"
            )

    def interior(self) -> np.ndarray:
        return self.values < 0.0

    def copy(self) -> "TsdfGrid":
        return TsdfGrid(self.resolution, self.tau, self.values.copy())


def rasterize_tsdf(scene_sdf, resolution: int, tau: float) -> TsdfGrid:
    """Sample ``scene_sdf`` at the cell centers of a uniform grid over
    [-1, 1]^3 and clamp to [-tau, tau].

    ``scene_sdf`` is any callable mapping [..., 3] points to distances (a
    ``Scene.sdf`` bound method works directly).
    """
    if resolution < 8:
        raise ParameterError(f"rasterize_tsdf: resolution must be >= 8, got {resolution}")
    if not tau > 0:
        raise ParameterError(f"rasterize_tsdf: tau must be positive, got {tau}")
    c = cell_centers(resolution)
    xs, ys, zs = np.meshgrid(c, c, c, indexing="ij")
    points = np.stack([xs, ys, zs], axis=-1).reshape(-1, 3)
    values = np.asarray(scene_sdf(points), dtype=np.float64)
    values = np.clip(values, -tau, tau)
    return TsdfGrid(
        resolution, tau,
        values.astype(np.float32).reshape(resolution, resolution, resolution),
    )


@dataclass(frozen=True)
class Silhouette:
    """Orthographic binary occupancy projected along ``axis`` ('x'|'y'|'z').

    ``pixels[i, j]`` is true iff some voxel along the projection ray through
    (i, j) has a negative TSDF value; (i, j) index the two remaining axes in
    (x, y, z) order.
    """

    axis: str
    pixels: np.ndarray  # [D, D] bool


_AXIS_INDEX = {"x": 0, "y": 1, "z": 2}


def silhouette_project(grid: TsdfGrid, axis: str) -> Silhouette:
    if axis not in _AXIS_INDEX:
        raise ParameterError(f"silhouette_project: axis must be x, y or z, got {axis!r}")
    return Silhouette(axis, grid.interior().any(axis=_AXIS_INDEX[axis]))


def interior_connected(grid: TsdfGrid) -> bool:
    """True if the negative voxels form one 6-connected component (or none)."""
    occ = grid.interior()
    total = int(occ.sum())
    if total == 0:
        return True
    seed = tuple(int(v) for v in np.argwhere(occ)[0])
    seen = np.zeros_like(occ)
    seen[seed] = True
    frontier = [seed]
    d = grid.resolution
    while frontier:
        nxt = []
        for (x, y, z) in frontier:
            for dx, dy, dz in (
                (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)
            ):
                nx, ny, nz = x + dx, y + dy, z + dz
                if 0 <= nx < d and 0 <= ny < d and 0 <= nz < d \
                        and occ[nx, ny, nz] and not seen[nx, ny, nz]:
                    seen[nx, ny, nz] = True
                    nxt.append((nx, ny, nz))
        frontier = nxt
    return int(seen.sum()) == total
