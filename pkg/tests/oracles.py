"""Independent slow-path oracles shared by the unit and acceptance tests.

Nothing in here may call the closed-form intersection code it is used to
check; hits are found by point sampling and sign tests only.
"""
from __future__ import annotations

import math

import numpy as np

from demonav.geometry import Circle, Rect, Segment, WorldSpec


def raymarch_oracle(origin, angle, max_range, world, step=1e-4):
    """March along the ray in fixed steps and report the first surface hit.

    Area shapes (circles, rects, leaving the bounds) are detected by point
    membership; thin segments by an orientation-test crossing between
    consecutive sample points. Accurate to about one step.
    """
    n = int(math.ceil(max_range / step))
    t = np.arange(1, n + 1) * step
    dx, dy = math.cos(angle), math.sin(angle)
    px = origin[0] + t * dx
    py = origin[1] + t * dy

    inside = np.zeros(n, dtype=bool)
    for s in world.obstacles:
        if isinstance(s, Circle):
            inside |= (px - s.center[0]) ** 2 + (py - s.center[1]) ** 2 < s.radius ** 2
        elif isinstance(s, Rect):
            inside |= ((px >= s.lo[0]) & (px <= s.hi[0]) & (py >= s.lo[1]) & (py <= s.hi[1]))
    blo, bhi = world.bounds.lo, world.bounds.hi
    inside |= (px < blo[0]) | (px > bhi[0]) | (py < blo[1]) | (py > bhi[1])

    best = np.inf
    k = np.argmax(inside)
    if inside[k]:
        best = t[k] - step / 2.0

    # segment crossings between consecutive samples (origin included)
    qx = np.concatenate(([origin[0]], px))
    qy = np.concatenate(([origin[1]], py))
    for s in world.obstacles:
        if not isinstance(s, Segment):
            continue
        ax, ay = s.a
        bx, by = s.b
        sx, sy = bx - ax, by - ay
        side = sx * (qy - ay) - sy * (qx - ax)
        straddle = side[:-1] * side[1:] < 0
        # the marching sub-segment must also straddle the line through (a, b)
        d1 = (qx[1:] - qx[:-1]) * (ay - qy[:-1]) - (qy[1:] - qy[:-1]) * (ax - qx[:-1])
        d2 = (qx[1:] - qx[:-1]) * (by - qy[:-1]) - (qy[1:] - qy[:-1]) * (bx - qx[:-1])
        crossing = straddle & (d1 * d2 < 0)
        k = np.argmax(crossing)
        if crossing[k]:
            best = min(best, t[k] - step / 2.0 if k > 0 else step / 2.0)

    return min(best, max_range)


def clearance_sweep_oracle(point, world, n_rays=3600):
    """min distance to any surface, approximated by a dense angular raycast."""
    from demonav.geometry import ray_distances

    angles = np.arange(n_rays) * (2.0 * math.pi / n_rays)
    reach = world.bounds.diagonal + 1.0
    return float(ray_distances(point, angles, reach, world).min())


# ---------------------------------------------------------------------------
# Random scene generation in generic position
# ---------------------------------------------------------------------------

def _line_point_distance(origin, dx, dy, p):
    return abs(dx * (p[1] - origin[1]) - dy * (p[0] - origin[0]))


def _ray_near_segment_degenerate(origin, dx, dy, a, b, margin):
    if (_line_point_distance(origin, dx, dy, a) < margin
            or _line_point_distance(origin, dx, dy, b) < margin):
        return True
    sx, sy = b[0] - a[0], b[1] - a[1]
    norm = math.hypot(sx, sy)
    sin_angle = abs(dx * sy - dy * sx) / norm
    if sin_angle < 5e-3 and _line_point_distance(origin, dx, dy, a) < 10 * margin:
        return True
    return False


def _rect_edges(lo, hi):
    c = [(lo[0], lo[1]), (hi[0], lo[1]), (hi[0], hi[1]), (lo[0], hi[1])]
    return [(c[i], c[(i + 1) % 4]) for i in range(4)]


def ray_is_generic(origin, angle, max_range, world, margin=2e-3):
    """Reject rays whose exact hit could legitimately disagree with marching.

    Near-tangent circle grazes, rays through rect corners or segment
    endpoints, and near-collinear thin walls are all excluded; so are hits
    within `margin` of the clamp distance.
    """
    dx, dy = math.cos(angle), math.sin(angle)
    for s in world.obstacles:
        if isinstance(s, Circle):
            pd = _line_point_distance(origin, dx, dy, s.center)
            if abs(pd - s.radius) < margin:
                return False
        elif isinstance(s, Rect):
            for a, b in _rect_edges(s.lo, s.hi):
                if _ray_near_segment_degenerate(origin, dx, dy, a, b, margin):
                    return False
        else:
            if _ray_near_segment_degenerate(origin, dx, dy, s.a, s.b, margin):
                return False
    for a, b in _rect_edges(world.bounds.lo, world.bounds.hi):
        if _ray_near_segment_degenerate(origin, dx, dy, a, b, margin):
            return False
    return True


def random_scene(rng: np.random.Generator, with_segments=True):
    """A random small world plus a ray origin strictly clear of all surfaces.

    The clearance sweep oracle cannot resolve thin walls that point nearly
    straight at the query point, so callers validating it pass
    with_segments=False.
    """
    from demonav.geometry import min_clearance

    half = rng.uniform(2.0, 4.0)
    bounds = Rect((-half, -half), (half, half))
    inner = half - 0.2
    obstacles = []
    for _ in range(rng.integers(0, 4)):
        c = rng.uniform(-inner, inner, 2)
        obstacles.append(Circle((float(c[0]), float(c[1])), float(rng.uniform(0.1, 0.6))))
    for _ in range(rng.integers(0, 3)):
        lo = rng.uniform(-inner, inner - 0.3, 2)
        size = rng.uniform(0.2, 1.0, 2)
        hi = np.minimum(lo + size, inner)
        obstacles.append(Rect((float(lo[0]), float(lo[1])), (float(hi[0]), float(hi[1]))))
    for _ in range(rng.integers(0, 3) if with_segments else 0):
        a = rng.uniform(-inner, inner, 2)
        b = a + rng.uniform(-1.5, 1.5, 2)
        b = np.clip(b, -inner, inner)
        if math.hypot(b[0] - a[0], b[1] - a[1]) < 0.05:
            continue
        obstacles.append(Segment((float(a[0]), float(a[1])), (float(b[0]), float(b[1]))))
    region = Rect((-inner, -inner), (inner, inner))
    world = WorldSpec(name="random", bounds=bounds, spawn_region=region,
                      goal_region=region, obstacles=tuple(obstacles))

    for _ in range(200):
        p = rng.uniform(-inner, inner, 2)
        if min_clearance((float(p[0]), float(p[1])), world) > 0.05:
            return world, (float(p[0]), float(p[1]))
    raise RuntimeError("could not find a clear origin in the random scene")


def random_generic_ray(rng: np.random.Generator, max_range=3.5):
    """(world, origin, angle) in generic position for the marching comparison."""
    for _ in range(500):
        world, origin = random_scene(rng)
        angle = float(rng.uniform(-math.pi, math.pi))
        if ray_is_generic(origin, angle, max_range, world):
            return world, origin, angle
    raise RuntimeError("could not generate a generic-position ray")
