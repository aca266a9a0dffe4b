"""Surface point sampling and evaluation metrics.

Conventions: Chamfer distance uses squared Euclidean nearest-neighbor
distances (symmetric sum of both directional means); the unidirectional
Hausdorff distance (UHD) uses unsquared distances; the F-score threshold is
1% of the [-1, 1]^3 domain diagonal. Occupancy IoU compares interiors
(negative TSDF voxels). All functions are pure and deterministic (surface
sampling takes an explicit seed).
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, EmptySurfaceError, ParameterError
from .shapegen.grid import TsdfGrid, cell_centers

# 1% of the diagonal of [-1, 1]^3.
FSCORE_THRESHOLD = 0.01 * 2.0 * np.sqrt(3.0)

# Evaluation cloud size used throughout the pipeline.
EVAL_POINTS = 2048


def _edge_crossings(values: np.ndarray, centers: np.ndarray,
                    mask: np.ndarray | None) -> np.ndarray:
    """Zero crossings along grid edges by linear interpolation.

    An edge contributes when its endpoint values have strictly opposite
    products; with ``mask`` given, both endpoints must be masked in.
    """
    points = []
    v = values.astype(np.float64)
    for axis in range(3):
        a = v[tuple(slice(None, -1) if ax == axis else slice(None) for ax in range(3))]
        b = v[tuple(slice(1, None) if ax == axis else slice(None) for ax in range(3))]
        cross = a * b < 0.0
        if mask is not None:
            ma = mask[tuple(slice(None, -1) if ax == axis else slice(None) for ax in range(3))]
            mb = mask[tuple(slice(1, None) if ax == axis else slice(None) for ax in range(3))]
            cross &= ma & mb
        idx = np.argwhere(cross)
        if idx.size == 0:
            continue
        va = a[cross]
        vb = b[cross]
        t = va / (va - vb)
        base = centers[idx]  # [n, 3] lower-corner cell centers
        step = centers[1] - centers[0]
        pts = base.copy()
        pts[:, axis] += t * step
        points.append(pts)
    if not points:
        return np.zeros((0, 3), dtype=np.float64)
    return np.concatenate(points, axis=0)


def surface_points(grid: TsdfGrid, n: int, seed: int,
                   mask: np.ndarray | None = None) -> np.ndarray:
    """Sample exactly ``n`` points on the zero-level surface of ``grid``.

    Crossing locations are interpolated along grid edges where adjacent
    values change sign, then uniformly subsampled (or repeated) to ``n``
    points with a generator seeded by ``seed``. ``mask`` optionally restricts
    crossings to edges whose both endpoint voxels are masked in.
    """
    centers = cell_centers(grid.resolution)
    pts = _edge_crossings(grid.values, centers, mask)
    m = pts.shape[0]
    if m == 0:
        raise EmptySurfaceError(
            "surface_points: grid has no sign change" +
            (" inside the mask" if mask is not None else "")
        )
    rng = np.random.default_rng(seed)
    if m >= n:
        chosen = np.sort(rng.choice(m, size=n, replace=False))
        return pts[chosen]
    reps = np.concatenate([np.tile(np.arange(m), n // m),
                           np.sort(rng.choice(m, size=n % m, replace=False))])
    return pts[reps]


def _nn_sq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-point min squared distance from each row of ``a`` to ``b``.

    Row-chunked so the [n_a, n_b, 3] difference buffer stays small; each
    row's result is independent of the chunking.
    """
    out = np.empty(a.shape[0], dtype=np.float64)
    step = max(1, 4_000_000 // max(1, b.shape[0]))
    for lo in range(0, a.shape[0], step):
        chunk = a[lo : lo + step]
        diff = chunk[:, None, :] - b[None, :, :]
        out[lo : lo + step] = (diff * diff).sum(axis=-1).min(axis=1)
    return out


def chamfer(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric Chamfer distance: mean squared NN distance both ways."""
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ParameterError("chamfer: point clouds must be non-empty")
    return float(_nn_sq(a, b).mean() + _nn_sq(b, a).mean())


def uhd(partial: np.ndarray, generated: np.ndarray) -> float:
    """Unidirectional Hausdorff: max over partial points of the (unsquared)
    distance to the nearest generated point."""
    if partial.shape[0] == 0 or generated.shape[0] == 0:
        raise ParameterError("uhd: point clouds must be non-empty")
    return float(np.sqrt(_nn_sq(partial, generated).max()))


def tmd(generations: list[np.ndarray]) -> float:
    """Total mutual difference: for each of the k generations, the average
    Chamfer distance to the other k-1; returns the sum of the k averages."""
    k = len(generations)
    if k < 2:
        raise ParameterError(f"tmd: need at least 2 generations, got {k}")
    pair = {}
    for i in range(k):
        for j in range(i + 1, k):
            pair[(i, j)] = chamfer(generations[i], generations[j])
    total = 0.0
    for i in range(k):
        others = [pair[(min(i, j), max(i, j))] for j in range(k) if j != i]
        total += sum(others) / (k - 1)
    return total


def occupancy_iou(a: TsdfGrid, b: TsdfGrid) -> float:
    if a.resolution != b.resolution:
        raise DimensionError(
            f"occupancy_iou: resolutions differ, {a.resolution} vs {b.resolution}"
        )
    return occupancy_iou_arrays(a.values, b.values)


def occupancy_iou_arrays(a_values: np.ndarray, b_values: np.ndarray) -> float:
    inter = int(((a_values < 0) & (b_values < 0)).sum())
    union = int(((a_values < 0) | (b_values < 0)).sum())
    return 1.0 if union == 0 else inter / union


def fscore(a: np.ndarray, b: np.ndarray,
           threshold: float = FSCORE_THRESHOLD) -> float:
    """F-score at ``threshold``: harmonic mean of the fraction of ``a``
    within ``threshold`` of ``b`` (precision) and vice versa (recall)."""
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ParameterError("fscore: point clouds must be non-empty")
    t2 = threshold * threshold
    precision = float((_nn_sq(a, b) <= t2).mean())
    recall = float((_nn_sq(b, a) <= t2).mean())
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)
