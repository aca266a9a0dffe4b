"""Parametric shape families: table, chair, box, lamp, craft.

Every family is a small union of primitives controlled by a handful of named
scalar parameters, each within a documented range, laid out so the composed
shape fits inside [-1, 1]^3 with margin and has a connected interior. The
vertical axis is y. Labels are the family's index in ``FAMILIES``; the
attribute vector holds four normalized descriptors (height, width, thinness,
elevation) derived from the composed geometry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError
from .sdf import Box, Cylinder, Primitive, Scene, Sphere

FAMILIES = ("table", "chair", "box", "lamp", "craft")

ATTRIBUTE_NAMES = ("height", "width", "thinness", "elevation")

# Documented sampling ranges per family parameter. build_scene validates
# against these, so externally-supplied specs fail loudly out of range.
PARAM_RANGES: dict[str, dict[str, tuple[float, float]]] = {
    "box": {
        "half_x": (0.25, 0.75), "half_y": (0.25, 0.75), "half_z": (0.25, 0.75),
        "center_y": (-0.13, 0.13),
    },
    "table": {
        "top_half_x": (0.45, 0.80), "top_half_z": (0.45, 0.80),
        "top_thickness": (0.05, 0.12), "top_height": (0.15, 0.55),
        "leg_thickness": (0.05, 0.10),
    },
    "chair": {
        "seat_half": (0.35, 0.55), "seat_thickness": (0.05, 0.09),
        "seat_height": (-0.15, 0.10), "leg_thickness": (0.05, 0.09),
        "back_half_height": (0.25, 0.40), "back_thickness": (0.04, 0.08),
    },
    "lamp": {
        "base_radius": (0.30, 0.50), "pole_radius": (0.055, 0.09),
        "shade_radius": (0.25, 0.45), "shade_height": (0.20, 0.35),
        "shade_y": (0.30, 0.55),
    },
    "craft": {
        "hull_radius": (0.12, 0.20), "hull_half_length": (0.55, 0.78),
        "wing_half_span": (0.55, 0.85), "wing_half_chord": (0.10, 0.20),
        "wing_half_thickness": (0.04, 0.06), "wing_z": (-0.10, 0.20),
        "fin_half_height": (0.15, 0.25),
    },
}

_FLOOR_Y = -0.85  # legs and lamp bases end here


@dataclass(frozen=True)
class ShapeSpec:
    """One procedural shape: family, parameters, class label, attributes."""

    family: str
    params: dict[str, float]
    label: int
    attributes: np.ndarray  # (4,) float32, each in [0, 1]


def _validate(family: str, params: dict[str, float]) -> None:
    if family not in PARAM_RANGES:
        raise ParameterError(f"unknown family {family!r}")
    ranges = PARAM_RANGES[family]
    if set(params) != set(ranges):
        raise ParameterError(
            f"{family}: expected params {sorted(ranges)}, got {sorted(params)}"
        )
    for name, value in params.items():
        lo, hi = ranges[name]
        if not (lo - 1e-9 <= value <= hi + 1e-9):
            raise ParameterError(
                f"{family}.{name}={value} outside [{lo}, {hi}]"
            )


def _legs(half_x: float, half_z: float, top_y: float, leg_w: float) -> list[Primitive]:
    cx = half_x - leg_w - 0.03
    cz = half_z - leg_w - 0.03
    cy = 0.5 * (top_y + _FLOOR_Y)
    half_h = 0.5 * (top_y - _FLOOR_Y)
    return [
        Box((leg_w, half_h, leg_w), (sx * cx, cy, sz * cz))
        for sx in (-1.0, 1.0) for sz in (-1.0, 1.0)
    ]


def build_scene(spec: ShapeSpec) -> Scene:
    """Compose the primitive union for ``spec`` (validates parameters)."""
    _validate(spec.family, spec.params)
    p = spec.params
    if spec.family == "box":
        parts: list[Primitive] = [
            Box((p["half_x"], p["half_y"], p["half_z"]), (0.0, p["center_y"], 0.0))
        ]
    elif spec.family == "table":
        top = Box(
            (p["top_half_x"], p["top_thickness"], p["top_half_z"]),
            (0.0, p["top_height"], 0.0),
        )
        parts = [top] + _legs(
            p["top_half_x"], p["top_half_z"], p["top_height"], p["leg_thickness"]
        )
    elif spec.family == "chair":
        sw, sh = p["seat_half"], p["seat_height"]
        bh = min(p["back_half_height"], 0.5 * (0.88 - sh))
        seat = Box((sw, p["seat_thickness"], sw), (0.0, sh, 0.0))
        back = Box(
            (sw, bh, p["back_thickness"]),
            (0.0, sh + bh, -(sw - p["back_thickness"])),
        )
        parts = [seat, back] + _legs(sw, sw, sh, p["leg_thickness"])
    elif spec.family == "lamp":
        shade_y = p["shade_y"]
        parts = [
            Cylinder(p["base_radius"], 0.12, (0.0, -0.80, 0.0)),
            Cylinder(
                p["pole_radius"], shade_y - _FLOOR_Y,
                (0.0, 0.5 * (shade_y + _FLOOR_Y), 0.0),
            ),
            Cylinder(p["shade_radius"], p["shade_height"], (0.0, shade_y, 0.0)),
        ]
    else:  # craft
        r, hl = p["hull_radius"], p["hull_half_length"]
        fin_h = p["fin_half_height"]
        parts = [
            Cylinder(r, 2.0 * hl, (0.0, 0.0, 0.0), axis=2),
            Sphere(r, (0.0, 0.0, hl)),
            Box(
                (p["wing_half_span"], p["wing_half_thickness"], p["wing_half_chord"]),
                (0.0, 0.0, p["wing_z"]),
            ),
            Box((0.03, fin_h, 0.10), (0.0, fin_h + 0.3 * r, -hl + 0.12)),
        ]
    return Scene(tuple(parts))


def _part_bounds(part: Primitive) -> tuple[np.ndarray, np.ndarray]:
    c = np.asarray(part.center)
    if isinstance(part, Box):
        h = np.asarray(part.halfext)
    elif isinstance(part, Sphere):
        h = np.full(3, part.radius)
    else:
        h = np.full(3, part.radius)
        h[part.axis] = 0.5 * part.height
    return c - h, c + h


_THINNESS_PARAM = {
    "box": "half_y", "table": "leg_thickness", "chair": "leg_thickness",
    "lamp": "pole_radius", "craft": "wing_half_thickness",
}


def _attributes(family: str, params: dict[str, float], scene: Scene) -> np.ndarray:
    los, his = zip(*(_part_bounds(part) for part in scene.parts))
    lo = np.min(los, axis=0)
    hi = np.max(his, axis=0)
    height = (hi[1] - lo[1]) / 2.0
    width = max(hi[0] - lo[0], hi[2] - lo[2]) / 2.0
    thinness = 1.0 - params[_THINNESS_PARAM[family]] / 0.4
    elevation = (0.5 * (hi[1] + lo[1]) + 1.0) / 2.0
    return np.clip(
        np.array([height, width, thinness, elevation], dtype=np.float32), 0.0, 1.0
    )


def sample_spec(family: str, rng: np.random.Generator) -> ShapeSpec:
    """Draw a spec with parameters uniform over the family's ranges."""
    ranges = PARAM_RANGES[family]
    params = {name: float(rng.uniform(lo, hi)) for name, (lo, hi) in ranges.items()}
    spec = ShapeSpec(family, params, FAMILIES.index(family), np.zeros(4, np.float32))
    scene = build_scene(spec)
    return ShapeSpec(
        family, params, spec.label, _attributes(family, params, scene)
    )


def random_spec(rng: np.random.Generator) -> ShapeSpec:
    """Draw a spec with the family uniform over ``FAMILIES``."""
    return sample_spec(FAMILIES[int(rng.integers(len(FAMILIES)))], rng)
