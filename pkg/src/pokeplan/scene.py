"""Tabletop world model: objects, goal regions, and contact geometry.

Objects are discs or boxes on a rectangular table.  Statics never move;
movables (and the single target) slide when poked.  All the low-level
distance/ray helpers the quasi-static simulator needs live here too.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

TARGET = "Target"
MOVABLE = "Movable"
STATIC = "Static"
ROLES = (TARGET, MOVABLE, STATIC)


@dataclass(frozen=True)
class Disc:
    radius: float


@dataclass(frozen=True)
class Box:
    width: float
    height: float


@dataclass
class SceneObject:
    """One body on the table; pose carries through as the world evolves."""

    obj_id: str
    x: float
    y: float
    theta: float
    shape: Disc | Box
    mass: float
    mu_surface: float
    role: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.mass <= 0 or self.mu_surface <= 0:
            raise ValueError("mass and mu_surface must be positive")

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def bounding_radius(self) -> float:
        if isinstance(self.shape, Disc):
            return self.shape.radius
        return 0.5 * math.hypot(self.shape.width, self.shape.height)


@dataclass(frozen=True)
class GoalRegion:
    """Closed goal region, disc or axis-aligned rectangle; boundary counts."""

    kind: str
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 0.0
    bounds: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)

    @staticmethod
    def disc(cx: float, cy: float, radius: float) -> "GoalRegion":
        return GoalRegion(kind="disc", center=(cx, cy), radius=radius)

    @staticmethod
    def rect(x0: float, y0: float, x1: float, y1: float) -> "GoalRegion":
        return GoalRegion(kind="rect", bounds=(x0, y0, x1, y1))

    def contains(self, p) -> bool:
        if self.kind == "disc":
            return math.hypot(p[0] - self.center[0], p[1] - self.center[1]) <= self.radius
        x0, y0, x1, y1 = self.bounds
        return x0 <= p[0] <= x1 and y0 <= p[1] <= y1

    def distance(self, p) -> float:
        """Euclidean distance to the region, 0 inside."""
        if self.kind == "disc":
            d = math.hypot(p[0] - self.center[0], p[1] - self.center[1]) - self.radius
            return max(0.0, d)
        x0, y0, x1, y1 = self.bounds
        dx = max(x0 - p[0], 0.0, p[0] - x1)
        dy = max(y0 - p[1], 0.0, p[1] - y1)
        return math.hypot(dx, dy)


# --- point / segment / ray geometry --------------------------------------

def _to_box_frame(p, obj: SceneObject) -> np.ndarray:
    c = math.cos(-obj.theta)
    s = math.sin(-obj.theta)
    dx = p[0] - obj.x
    dy = p[1] - obj.y
    return np.array([c * dx - s * dy, s * dx + c * dy])


def surface_gap(p, obj: SceneObject) -> float:
    """Signed distance from a point to the object surface (negative inside)."""
    if isinstance(obj.shape, Disc):
        return math.hypot(p[0] - obj.x, p[1] - obj.y) - obj.shape.radius
    q = _to_box_frame(p, obj)
    hw = 0.5 * obj.shape.width
    hh = 0.5 * obj.shape.height
    dx = abs(q[0]) - hw
    dy = abs(q[1]) - hh
    if dx > 0.0 or dy > 0.0:
        return math.hypot(max(dx, 0.0), max(dy, 0.0))
    return max(dx, dy)


def contact_normal(p, obj: SceneObject) -> np.ndarray | None:
    """Unit push direction from a probe at p into the object; None if degenerate."""
    if isinstance(obj.shape, Disc):
        d = obj.center - np.asarray(p, dtype=float)
        n = np.linalg.norm(d)
        return d / n if n > 1e-12 else None
    # box: climb the signed-distance gradient toward the centroid
    d = obj.center - np.asarray(p, dtype=float)
    n = np.linalg.norm(d)
    return d / n if n > 1e-12 else None


def pair_gap(a: SceneObject, b: SceneObject) -> float:
    """Surface-to-surface distance between two objects (discs/boxes)."""
    if isinstance(a.shape, Disc) and isinstance(b.shape, Disc):
        return math.hypot(a.x - b.x, a.y - b.y) - a.shape.radius - b.shape.radius
    if isinstance(a.shape, Disc):
        return surface_gap((a.x, a.y), b) - a.shape.radius
    if isinstance(b.shape, Disc):
        return surface_gap((b.x, b.y), a) - b.shape.radius
    # box-box: bounding-disc approximation; statics are authored not to touch
    return math.hypot(a.x - b.x, a.y - b.y) - a.bounding_radius() - b.bounding_radius()


def segment_point_distance(a, b, p) -> float:
    ax, ay = a[0], a[1]
    bx, by = b[0], b[1]
    px, py = p[0], p[1]
    vx, vy = bx - ax, by - ay
    L2 = vx * vx + vy * vy
    if L2 <= 1e-18:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * vx + (py - ay) * vy) / L2
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (ax + t * vx), py - (ay + t * vy))


def _segment_segment_distance(a1, a2, b1, b2) -> float:
    d1 = segment_point_distance(a1, a2, b1)
    d2 = segment_point_distance(a1, a2, b2)
    d3 = segment_point_distance(b1, b2, a1)
    d4 = segment_point_distance(b1, b2, a2)
    if _segments_cross(a1, a2, b1, b2):
        return 0.0
    return min(d1, d2, d3, d4)


def _segments_cross(a1, a2, b1, b2) -> bool:
    def orient(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    o1 = orient(a1, a2, b1)
    o2 = orient(a1, a2, b2)
    o3 = orient(b1, b2, a1)
    o4 = orient(b1, b2, a2)
    return (o1 * o2 < 0) and (o3 * o4 < 0)


def segment_surface_gap(a, b, obj: SceneObject) -> float:
    """Distance from segment ab to the object surface (negative if inside)."""
    if isinstance(obj.shape, Disc):
        return segment_point_distance(a, b, (obj.x, obj.y)) - obj.shape.radius
    qa = _to_box_frame(a, obj)
    qb = _to_box_frame(b, obj)
    hw = 0.5 * obj.shape.width
    hh = 0.5 * obj.shape.height
    inside_a = abs(qa[0]) <= hw and abs(qa[1]) <= hh
    inside_b = abs(qb[0]) <= hw and abs(qb[1]) <= hh
    if inside_a or inside_b:
        return min(surface_gap(a, obj), surface_gap(b, obj))
    corners = [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)]
    best = math.inf
    for i in range(4):
        c1 = corners[i]
        c2 = corners[(i + 1) % 4]
        d = _segment_segment_distance(qa, qb, c1, c2)
        if d == 0.0:
            return 0.0
        best = min(best, d)
    return best


def ray_hit_disc(p0, direction, length, center, radius) -> float | None:
    """Earliest travel distance t in [0, length] with |p0 + t d - c| = radius."""
    fx = p0[0] - center[0]
    fy = p0[1] - center[1]
    b = fx * direction[0] + fy * direction[1]
    c = fx * fx + fy * fy - radius * radius
    if c <= 0.0:
        # already inside the shell: blocked only when closing in; an object
        # parked exactly on contact must stay free to slide away or along
        return 0.0 if b < -1e-12 else None
    disc = b * b - c
    if disc < 0.0:
        return None
    t = -b - math.sqrt(disc)
    if 0.0 <= t <= length:
        return t
    return None


def ray_hit_box(p0, direction, length, obj: SceneObject, inflate: float) -> float | None:
    """Earliest travel distance where a disc of radius `inflate` moving from
    p0 touches the box; slab test against the inflated box (corners treated
    square, which stops fractionally early -- conservative)."""
    q = _to_box_frame(p0, obj)
    c = math.cos(-obj.theta)
    s = math.sin(-obj.theta)
    d = np.array([c * direction[0] - s * direction[1],
                  s * direction[0] + c * direction[1]])
    hw = 0.5 * obj.shape.width + inflate
    hh = 0.5 * obj.shape.height + inflate
    if abs(q[0]) <= hw and abs(q[1]) <= hh:
        # on or inside the inflated face: blocked only when pressing further
        # in; sliding along or off a touching face stays free
        if abs(q[0]) < hw - 1e-12 and abs(q[1]) < hh - 1e-12:
            return 0.0
        for axis, half in ((0, hw), (1, hh)):
            on_face = abs(q[axis]) >= half - 1e-12
            if on_face and -math.copysign(1.0, q[axis]) * d[axis] > 1e-12:
                return 0.0
        return None
    t0, t1 = 0.0, length
    for axis, half in ((0, hw), (1, hh)):
        if abs(d[axis]) < 1e-12:
            if abs(q[axis]) > half:
                return None
            continue
        ta = (-half - q[axis]) / d[axis]
        tb = (half - q[axis]) / d[axis]
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
        if t0 > t1:
            return None
    return t0 if t0 <= length else None


def ray_exit_table(p0, direction, length, table, margin) -> float | None:
    """Earliest travel distance where a disc of radius `margin` would cross
    the table edge; None if the whole run stays inside."""
    x0, y0, x1, y1 = table
    lo = (x0 + margin, y0 + margin)
    hi = (x1 - margin, y1 - margin)
    best = None
    for axis in (0, 1):
        d = direction[axis]
        if d > 1e-12:
            t = (hi[axis] - p0[axis]) / d
        elif d < -1e-12:
            t = (lo[axis] - p0[axis]) / d
        else:
            continue
        if 0.0 <= t <= length and (best is None or t < best):
            best = t
    return best


# --- environment ----------------------------------------------------------

@dataclass
class Perturbation:
    """Realized model error applied at execution time.

    mu_factors multiply each object's nominal surface friction; rng supplies
    per-impact contact-normal angle noise of scale sigma_theta [rad].
    """

    mu_factors: dict[str, float]
    sigma_theta: float
    rng: np.random.Generator


@dataclass
class Environment:
    """The table, its objects, and the goal; exactly one Target object."""

    objects: list[SceneObject]
    goal: GoalRegion
    table: tuple[float, float, float, float]
    gravity_accel: float = 9.81
    perturbation: Perturbation | None = None

    def __post_init__(self):
        targets = [o for o in self.objects if o.role == TARGET]
        if len(targets) != 1:
            raise ValueError(f"environment needs exactly one Target, found {len(targets)}")
        ids = [o.obj_id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique")
        x0, y0, x1, y1 = self.table
        if not (x1 > x0 and y1 > y0):
            raise ValueError("degenerate table bounds")
        if self.goal.kind == "disc":
            gx, gy = self.goal.center
            r = self.goal.radius
            goal_ok = (x0 <= gx - r and gx + r <= x1
                       and y0 <= gy - r and gy + r <= y1)
        else:
            bx0, by0, bx1, by1 = self.goal.bounds
            goal_ok = x0 <= bx0 and bx1 <= x1 and y0 <= by0 and by1 <= y1
        if not goal_ok:
            raise ValueError("goal region must lie within the table")
        for o in self.objects:
            r = o.bounding_radius()
            if not (x0 - 1e-9 <= o.x - r and o.x + r <= x1 + 1e-9
                    and y0 - 1e-9 <= o.y - r and o.y + r <= y1 + 1e-9):
                raise ValueError(f"object {o.obj_id} starts outside the table")
        for i, a in enumerate(self.objects):
            for b in self.objects[i + 1:]:
                if a.role == STATIC and b.role == STATIC:
                    continue
                if pair_gap(a, b) < -1e-9:
                    raise ValueError(f"objects {a.obj_id} and {b.obj_id} overlap")

    def target(self) -> SceneObject:
        return next(o for o in self.objects if o.role == TARGET)

    def movables(self) -> list[SceneObject]:
        return [o for o in self.objects if o.role != STATIC]

    def statics(self) -> list[SceneObject]:
        return [o for o in self.objects if o.role == STATIC]

    def obj(self, obj_id: str) -> SceneObject:
        for o in self.objects:
            if o.obj_id == obj_id:
                return o
        raise KeyError(obj_id)

    def clone(self) -> "Environment":
        return copy.deepcopy(self)

    def nominal_clone(self) -> "Environment":
        """Clone with the perturbation stripped: the planner's sim world."""
        out = copy.deepcopy(self)
        out.perturbation = None
        return out

    def effective_mu(self, obj: SceneObject) -> float:
        if self.perturbation is None:
            return obj.mu_surface
        return obj.mu_surface * self.perturbation.mu_factors.get(obj.obj_id, 1.0)


def goal_reached(env: Environment) -> bool:
    """True when the target centroid lies in the closed goal region."""
    t = env.target()
    return env.goal.contains((t.x, t.y))


def target_goal_distance(env: Environment) -> float:
    t = env.target()
    return env.goal.distance((t.x, t.y))
