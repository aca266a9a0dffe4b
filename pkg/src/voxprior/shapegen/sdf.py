"""Analytic signed distance primitives and min-union scene composition.

Primitives are axis-aligned (cylinders may point along any coordinate axis)
and placed by translation. Distances are exact Euclidean SDFs, so unions by
pointwise min are exact outside the union and a tight bound inside overlaps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ParameterError

Points = np.ndarray  # [..., 3] float


def _check_positive(name: str, *values: float) -> None:
    for v in values:
        if not v > 0:
            raise ParameterError(f"{name}: extent must be positive, got {v}")


@dataclass(frozen=True)
class Box:
    """Axis-aligned box with half-extents ``halfext`` centered at ``center``."""

    halfext: tuple[float, float, float]
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        _check_positive("box", *self.halfext)

    def sdf(self, points: Points) -> np.ndarray:
        q = np.abs(points - np.asarray(self.center)) - np.asarray(self.halfext)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(q.max(axis=-1), 0.0)
        return outside + inside


@dataclass(frozen=True)
class Sphere:
    radius: float
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        _check_positive("sphere", self.radius)

    def sdf(self, points: Points) -> np.ndarray:
        return np.linalg.norm(points - np.asarray(self.center), axis=-1) - self.radius


@dataclass(frozen=True)
class Cylinder:
    """Capped cylinder of radius ``radius`` and full height ``height`` whose
    axis runs along coordinate ``axis`` (0=x, 1=y, 2=z) through ``center``."""

    radius: float
    height: float
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    axis: int = 1

    def __post_init__(self):
        _check_positive("cylinder", self.radius, self.height)
        if self.axis not in (0, 1, 2):
            raise ParameterError(f"cylinder: axis must be 0, 1 or 2, got {self.axis}")

    def sdf(self, points: Points) -> np.ndarray:
        p = points - np.asarray(self.center)
        radial_axes = [a for a in range(3) if a != self.axis]
        r = np.linalg.norm(p[..., radial_axes], axis=-1)
        d_r = r - self.radius
        d_a = np.abs(p[..., self.axis]) - 0.5 * self.height
        d = np.stack([d_r, d_a], axis=-1)
        outside = np.linalg.norm(np.maximum(d, 0.0), axis=-1)
        inside = np.minimum(d.max(axis=-1), 0.0)
        return outside + inside


Primitive = Box | Sphere | Cylinder


@dataclass(frozen=True)
class Scene:
    """Union of primitives; the scene SDF is the pointwise min over parts."""

    parts: tuple[Primitive, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.parts:
            raise ParameterError("scene: at least one primitive is required")

    def sdf(self, points: Points) -> np.ndarray:
        values = self.parts[0].sdf(points)
        for part in self.parts[1:]:
            values = np.minimum(values, part.sdf(points))
        return values


def primitive_sdf(point, primitive: Primitive) -> np.ndarray:
    """Signed distance of ``point`` (a 3-vector or [..., 3] array)."""
    return primitive.sdf(np.asarray(point, dtype=np.float64))
