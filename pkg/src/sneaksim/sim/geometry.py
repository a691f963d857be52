"""2.5-D geometry: ground-plane rectangles with heights, segment tests, view cones."""

from __future__ import annotations

import math
from dataclasses import dataclass

Vec2 = tuple[float, float]


@dataclass(frozen=True)
class Rect:
    x0: float
    z0: float
    x1: float
    z1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.z0 < self.z1):
            raise ValueError(f"degenerate rectangle {self}")

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.z1 - self.z0)

    def contains(self, p: Vec2, margin: float = 0.0) -> bool:
        return (self.x0 - margin <= p[0] <= self.x1 + margin
                and self.z0 - margin <= p[1] <= self.z1 + margin)

    def clamp(self, p: Vec2) -> Vec2:
        return (min(max(p[0], self.x0), self.x1), min(max(p[1], self.z0), self.z1))

    def translated(self, dx: float, dz: float) -> Rect:
        return Rect(self.x0 + dx, self.z0 + dz, self.x1 + dx, self.z1 + dz)

    def union(self, other: Rect) -> Rect:
        return Rect(min(self.x0, other.x0), min(self.z0, other.z0), max(self.x1, other.x1), max(self.z1, other.z1))

    def inside(self, outer: Rect) -> bool:
        return (outer.x0 <= self.x0 and outer.z0 <= self.z0 and self.x1 <= outer.x1 and self.z1 <= outer.z1)


def segment_hits_rect(p: Vec2, q: Vec2, r: Rect) -> bool:
    """True if the closed segment p-q touches the closed rectangle (slab clipping)."""
    t0, t1 = 0.0, 1.0
    d = (q[0] - p[0], q[1] - p[1])
    for axis, lo, hi in ((0, r.x0, r.x1), (1, r.z0, r.z1)):
        if d[axis] == 0.0:
            if p[axis] < lo or p[axis] > hi:
                return False
            continue
        a = (lo - p[axis]) / d[axis]
        b = (hi - p[axis]) / d[axis]
        if a > b:
            a, b = b, a
        t0 = max(t0, a)
        t1 = min(t1, b)
        if t0 > t1:
            return False
    return True


def _cross(o: Vec2, a: Vec2, b: Vec2) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def segment_intersection(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> Vec2 | None:
    """Crossing point of two segments, or None.  Touching endpoints count;
    collinear overlaps return the first overlapping point along p1-p2."""
    r = (p2[0] - p1[0], p2[1] - p1[1])
    s = (q2[0] - q1[0], q2[1] - q1[1])
    denom = r[0] * s[1] - r[1] * s[0]
    qp = (q1[0] - p1[0], q1[1] - p1[1])
    if denom == 0.0:
        if _cross(p1, p2, q1) != 0.0:
            return None
        rr = r[0] * r[0] + r[1] * r[1]
        if rr == 0.0:
            return None
        ta = (qp[0] * r[0] + qp[1] * r[1]) / rr
        tb = ta + (s[0] * r[0] + s[1] * r[1]) / rr
        lo, hi = max(0.0, min(ta, tb)), min(1.0, max(ta, tb))
        if lo > hi:
            return None
        return (p1[0] + lo * r[0], p1[1] + lo * r[1])
    t = (qp[0] * s[1] - qp[1] * s[0]) / denom
    u = (qp[0] * r[1] - qp[1] * r[0]) / denom
    if 0.0 <= t <= 1.0 and 0.0 <= u <= 1.0:
        return (p1[0] + t * r[0], p1[1] + t * r[1])
    return None


def bearing(frm: Vec2, to: Vec2) -> float:
    """Angle of ``to`` seen from ``frm`` in radians; 0 is +x, pi/2 is +z."""
    return math.atan2(to[1] - frm[1], to[0] - frm[0])


def angle_diff(a: float, b: float) -> float:
    """Signed smallest rotation from b to a, in (-pi, pi]."""
    d = math.fmod(a - b, 2 * math.pi)
    if d <= -math.pi:
        d += 2 * math.pi
    elif d > math.pi:
        d -= 2 * math.pi
    return d


def in_cone(origin: Vec2, facing: float, fov: float, target: Vec2) -> bool:
    """Whether ``target`` lies within ``fov / 2`` of ``facing`` (radians)."""
    if fov >= 2 * math.pi:
        return True
    if target == origin:
        return True
    return abs(angle_diff(bearing(origin, target), facing)) <= fov / 2 + 1e-12


def wrap(a: float) -> float:
    return angle_diff(a, 0.0)


def turn_toward(current: float, goal: float, max_step: float) -> float:
    d = angle_diff(goal, current)
    if abs(d) <= max_step:
        return wrap(goal)
    return wrap(current + math.copysign(max_step, d))
