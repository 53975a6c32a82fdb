"""2D scene geometry: obstacle shapes, ray casting and clearance queries.

Everything here is pure and deterministic: the same inputs produce bit-identical
outputs, so the simulator can be replayed exactly from a seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Union

import numpy as np
import yaml

TAU = math.tau


def wrap_angle(theta: float) -> float:
    """Map an angle in radians into (-pi, pi]."""
    r = math.remainder(theta, TAU)
    if r <= -math.pi:
        r += TAU
    return r


@dataclass(frozen=True)
class Circle:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"circle radius must be > 0, got {self.radius}")


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle given by its min and max corners."""

    lo: tuple[float, float]
    hi: tuple[float, float]

    def __post_init__(self):
        if not (self.lo[0] < self.hi[0] and self.lo[1] < self.hi[1]):
            raise ValueError(f"rect min corner must be < max corner, got {self.lo}, {self.hi}")

    def contains(self, x: float, y: float) -> bool:
        return self.lo[0] <= x <= self.hi[0] and self.lo[1] <= y <= self.hi[1]

    def contains_rect(self, other: "Rect") -> bool:
        return (self.lo[0] <= other.lo[0] and self.lo[1] <= other.lo[1]
                and other.hi[0] <= self.hi[0] and other.hi[1] <= self.hi[1])

    @property
    def diagonal(self) -> float:
        return math.hypot(self.hi[0] - self.lo[0], self.hi[1] - self.lo[1])


@dataclass(frozen=True)
class Segment:
    """Infinitely thin wall between two points."""

    a: tuple[float, float]
    b: tuple[float, float]

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError("segment endpoints must differ")


Shape = Union[Circle, Rect, Segment]


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float  # radians, kept in (-pi, pi]


class _PackedShapes:
    """Obstacle geometry flattened into arrays for vectorized ray queries."""

    def __init__(self, obstacles: tuple[Shape, ...]):
        circles = [s for s in obstacles if isinstance(s, Circle)]
        rects = [s for s in obstacles if isinstance(s, Rect)]
        segments = [s for s in obstacles if isinstance(s, Segment)]
        self.circle_centers = np.array([c.center for c in circles], dtype=np.float64).reshape(-1, 2)
        self.circle_radii = np.array([c.radius for c in circles], dtype=np.float64)
        self.rect_lo = np.array([r.lo for r in rects], dtype=np.float64).reshape(-1, 2)
        self.rect_hi = np.array([r.hi for r in rects], dtype=np.float64).reshape(-1, 2)
        self.seg_a = np.array([s.a for s in segments], dtype=np.float64).reshape(-1, 2)
        self.seg_b = np.array([s.b for s in segments], dtype=np.float64).reshape(-1, 2)


@dataclass(frozen=True)
class WorldSpec:
    """Static scene: outer walls, obstacles and the regions used for placement."""

    name: str
    bounds: Rect
    spawn_region: Rect
    goal_region: Rect
    obstacles: tuple[Shape, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if not self.bounds.contains_rect(self.spawn_region):
            raise ValueError("spawn_region must lie within bounds")
        if not self.bounds.contains_rect(self.goal_region):
            raise ValueError("goal_region must lie within bounds")

    @cached_property
    def _packed(self) -> _PackedShapes:
        return _PackedShapes(self.obstacles)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "bounds": {"min": list(self.bounds.lo), "max": list(self.bounds.hi)},
            "spawn_region": {"min": list(self.spawn_region.lo), "max": list(self.spawn_region.hi)},
            "goal_region": {"min": list(self.goal_region.lo), "max": list(self.goal_region.hi)},
            "obstacles": [_shape_to_dict(s) for s in self.obstacles],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WorldSpec":
        return cls(
            name=d["name"],
            bounds=_rect_from_dict(d["bounds"]),
            spawn_region=_rect_from_dict(d["spawn_region"]),
            goal_region=_rect_from_dict(d["goal_region"]),
            obstacles=tuple(_shape_from_dict(s) for s in d.get("obstacles", [])),
        )


def _shape_to_dict(s: Shape) -> dict:
    if isinstance(s, Circle):
        return {"type": "circle", "center": list(s.center), "radius": s.radius}
    if isinstance(s, Rect):
        return {"type": "rect", "min": list(s.lo), "max": list(s.hi)}
    if isinstance(s, Segment):
        return {"type": "segment", "a": list(s.a), "b": list(s.b)}
    raise TypeError(f"unknown shape {s!r}")


def _shape_from_dict(d: dict) -> Shape:
    kind = d["type"]
    if kind == "circle":
        return Circle(center=tuple(d["center"]), radius=float(d["radius"]))
    if kind == "rect":
        return Rect(lo=tuple(d["min"]), hi=tuple(d["max"]))
    if kind == "segment":
        return Segment(a=tuple(d["a"]), b=tuple(d["b"]))
    raise ValueError(f"unknown shape type {kind!r}")


def _rect_from_dict(d: dict) -> Rect:
    return Rect(lo=tuple(d["min"]), hi=tuple(d["max"]))


def save_world(world: WorldSpec, path: str | Path) -> None:
    with open(path, "w") as f:
        yaml.safe_dump(world.to_dict(), f, sort_keys=False)


def load_world(path: str | Path) -> WorldSpec:
    with open(path) as f:
        return WorldSpec.from_dict(yaml.safe_load(f))


# ---------------------------------------------------------------------------
# Ray casting
# ---------------------------------------------------------------------------

_TINY = 1e-300  # stands in for a zero direction component in slab tests


def _ray_rect_crossings(ox, oy, dx, dy, lo, hi):
    """Smallest positive ray parameter at which each rect boundary is crossed.

    lo, hi: (n, 2) corner arrays; dx, dy: (m,) direction components.
    Returns (m, n) parameters, +inf where there is no positive crossing.
    Works both from outside (entry at tmin) and inside (exit at tmax).
    """
    dx = np.where(dx == 0.0, _TINY, dx)[:, None]
    dy = np.where(dy == 0.0, _TINY, dy)[:, None]
    tx1 = (lo[:, 0] - ox) / dx
    tx2 = (hi[:, 0] - ox) / dx
    ty1 = (lo[:, 1] - oy) / dy
    ty2 = (hi[:, 1] - oy) / dy
    tmin = np.maximum(np.minimum(tx1, tx2), np.minimum(ty1, ty2))
    tmax = np.minimum(np.maximum(tx1, tx2), np.maximum(ty1, ty2))
    hit = (tmax >= tmin) & (tmax > 0.0)
    first = np.where(tmin > 0.0, tmin, tmax)
    return np.where(hit, first, np.inf)


def ray_distances(origin: tuple[float, float], angles: np.ndarray, max_range: float,
                  world: WorldSpec) -> np.ndarray:
    """Cast one ray per angle from origin; distances clamped to max_range.

    Angles are world-frame radians. Raises if the origin is outside the world
    bounds (the simulation state is corrupt at that point).
    """
    if max_range <= 0:
        raise ValueError("max_range must be > 0")
    ox, oy = float(origin[0]), float(origin[1])
    if not world.bounds.contains(ox, oy):
        raise ValueError(f"ray origin ({ox}, {oy}) is outside world bounds")

    angles = np.asarray(angles, dtype=np.float64).ravel()
    canon = angles - np.round(angles / TAU) * TAU
    dx = np.cos(canon)
    dy = np.sin(canon)
    best = np.full(canon.shape, np.inf)

    packed = world._packed

    # outer walls, hit from inside
    blo = np.array([world.bounds.lo], dtype=np.float64)
    bhi = np.array([world.bounds.hi], dtype=np.float64)
    best = np.minimum(best, _ray_rect_crossings(ox, oy, dx, dy, blo, bhi)[:, 0])

    if packed.rect_lo.size:
        t = _ray_rect_crossings(ox, oy, dx, dy, packed.rect_lo, packed.rect_hi)
        best = np.minimum(best, t.min(axis=1))

    if packed.circle_centers.size:
        oc = np.array([ox, oy]) - packed.circle_centers          # (n, 2)
        b = dx[:, None] * oc[:, 0] + dy[:, None] * oc[:, 1]      # (m, n)
        c0 = np.sum(oc * oc, axis=1) - packed.circle_radii ** 2  # (n,)
        disc = b * b - c0
        with np.errstate(invalid="ignore"):
            sq = np.sqrt(np.maximum(disc, 0.0))
            t1 = -b - sq
            t2 = -b + sq
            t = np.where(t1 > 0.0, t1, np.where(t2 > 0.0, t2, np.inf))
            t = np.where(disc >= 0.0, t, np.inf)
        best = np.minimum(best, t.min(axis=1))

    if packed.seg_a.size:
        s = packed.seg_b - packed.seg_a                          # (n, 2)
        ao = packed.seg_a - np.array([ox, oy])                   # (n, 2)
        denom = dx[:, None] * s[:, 1] - dy[:, None] * s[:, 0]    # (m, n)
        cross_ao_s = ao[:, 0] * s[:, 1] - ao[:, 1] * s[:, 0]     # (n,)
        cross_ao_d = ao[:, 0] * dy[:, None] - ao[:, 1] * dx[:, None]  # (m, n)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = cross_ao_s / denom
            u = cross_ao_d / denom
            ok = (denom != 0.0) & (u >= 0.0) & (u <= 1.0) & (t > 0.0)
            t = np.where(ok, t, np.inf)
        best = np.minimum(best, t.min(axis=1))

    return np.minimum(best, max_range)


def raycast(origin: tuple[float, float], direction_angle: float, max_range: float,
            world: WorldSpec) -> float:
    """Distance to the nearest obstacle or wall along one ray, clamped to max_range."""
    return float(ray_distances(origin, np.array([direction_angle]), max_range, world)[0])


def lidar_scan(pose: Pose, world: WorldSpec, n_beams: int, fov: float,
               max_range: float) -> np.ndarray:
    """Distances for n_beams rays spread over the field of view.

    Beam i sits at body-frame angle -fov/2 + i * fov/(n_beams-1), endpoints
    inclusive, rotated into the world frame by the pose heading.
    """
    if n_beams < 2:
        raise ValueError("n_beams must be >= 2")
    offsets = -fov / 2.0 + np.arange(n_beams) * (fov / (n_beams - 1))
    return ray_distances((pose.x, pose.y), pose.heading + offsets, max_range, world)


# ---------------------------------------------------------------------------
# Clearance
# ---------------------------------------------------------------------------

def _point_segment_distance(px, py, a, b) -> np.ndarray:
    ab = b - a
    ap = np.array([px, py]) - a
    denom = np.sum(ab * ab, axis=1)
    t = np.clip(np.sum(ap * ab, axis=1) / denom, 0.0, 1.0)
    closest = a + t[:, None] * ab
    return np.hypot(px - closest[:, 0], py - closest[:, 1])


def min_clearance(point: tuple[float, float], world: WorldSpec) -> float:
    """Euclidean distance from point to the nearest obstacle or wall surface.

    Returns 0 if the point is inside an obstacle. The point must be inside
    the world bounds.
    """
    px, py = float(point[0]), float(point[1])
    if not world.bounds.contains(px, py):
        raise ValueError(f"point ({px}, {py}) is outside world bounds")

    lo, hi = world.bounds.lo, world.bounds.hi
    best = min(px - lo[0], hi[0] - px, py - lo[1], hi[1] - py)

    packed = world._packed
    if packed.circle_centers.size:
        d = np.hypot(px - packed.circle_centers[:, 0], py - packed.circle_centers[:, 1])
        best = min(best, float(np.min(d - packed.circle_radii)))
    if packed.rect_lo.size:
        gap = np.maximum(np.maximum(packed.rect_lo - [px, py], [px, py] - packed.rect_hi), 0.0)
        d = np.hypot(gap[:, 0], gap[:, 1])
        inside = np.all((packed.rect_lo <= [px, py]) & ([px, py] <= packed.rect_hi), axis=1)
        d = np.where(inside, 0.0, d)
        best = min(best, float(np.min(d)))
    if packed.seg_a.size:
        best = min(best, float(np.min(_point_segment_distance(px, py, packed.seg_a, packed.seg_b))))

    return max(best, 0.0)
