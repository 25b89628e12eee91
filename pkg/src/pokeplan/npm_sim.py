"""Quasi-static poking physics: impact, Coulomb free-slide, scene evolution.

An executed edge sweeps its interaction point through the scene.  Hitting a
movable object imparts an instantaneous velocity along the contact normal
(scaled by a transfer coefficient), after which the object slides in a
straight line and stops under Coulomb friction.  A slider that runs into
another movable hands its remaining impulse down the line (depth-capped);
statics and the table edge stop motion at contact.  Everything is at rest
between actions, so the world state is just object poses.

The "real" world is the same model with perturbed friction and a per-action
contact-normal angle noise; planners simulate on unperturbed clones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chain import ChainModel, DEFAULT_ORIENTATION_WINDOW, FailureSpec, PM
from .edgebundle import CONTACT_RADIUS, Edge
from .kinematics import frame_angles, heading_band_error, orientation_ray
from .scene import (Disc, Environment, Perturbation, SceneObject, STATIC,
                    TARGET, contact_normal, ray_exit_table, ray_hit_box,
                    ray_hit_disc, surface_gap)

KAPPA_DEFAULT = 0.8          # impact velocity transfer coefficient
SIGMA_THETA_DEFAULT = math.radians(3.0)
MAX_CHAIN_DEPTH = 3          # longest object-object push chain
_SKIN = 1e-9                 # collision shells shrink by this; touching
                             # objects stay free to slide apart or along


@dataclass(frozen=True)
class Contact:
    step: int
    object_id: str
    direction: tuple[float, float]


@dataclass
class ExecutionOutcome:
    env_after: Environment
    contacts: list[Contact]
    target_displacement: np.ndarray
    any_object_off_table: bool
    grabbed: bool = False


def free_slide(obj: SceneObject, v0, mu: float, g: float) -> np.ndarray:
    """Unobstructed slide displacement under uniform Coulomb deceleration."""
    if mu <= 0 or g <= 0:
        raise ValueError("mu and g must be positive")
    v0 = np.asarray(v0, dtype=float)
    speed = float(np.hypot(v0[0], v0[1]))
    if speed == 0.0:
        return np.zeros(2)
    return v0 / speed * (speed * speed / (2.0 * mu * g))


def spin_decay_angle(omega0: float, mu: float, g: float) -> float:
    """Rotation swept before a spinning object stops, same decay law applied
    to omega; only used when the rotation channel is switched on."""
    if mu <= 0 or g <= 0:
        raise ValueError("mu and g must be positive")
    return math.copysign(omega0 * omega0 / (2.0 * mu * g), omega0)


def perturb(env: Environment, sigma_mu: float, seed,
            sigma_theta: float | None = None) -> Environment:
    """Copy of env with lognormal friction factors and contact-angle noise.

    sigma_theta defaults to 3 degrees whenever friction noise is on; with
    sigma_mu = 0 (and no explicit sigma_theta) the copy is exact.
    """
    if sigma_mu < 0:
        raise ValueError("sigma_mu must be non-negative")
    if sigma_theta is None:
        sigma_theta = SIGMA_THETA_DEFAULT if sigma_mu > 0 else 0.0
    out = env.clone()
    if sigma_mu == 0 and sigma_theta == 0:
        out.perturbation = None
        return out
    rng = np.random.default_rng([seed, 3])
    factors = {o.obj_id: float(rng.lognormal(0.0, sigma_mu)) for o in out.objects}
    out.perturbation = Perturbation(mu_factors=factors, sigma_theta=sigma_theta,
                                    rng=rng)
    return out


def _rotate(v: np.ndarray, ang: float) -> np.ndarray:
    c, s = math.cos(ang), math.sin(ang)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def _stop_distance(world: Environment, obj: SceneObject, dirn: np.ndarray,
                   d_free: float, statics_only: bool = False):
    """Travel allowed along dirn before something stops obj.

    Returns (distance, blocking object or None, hit_table).  Collision
    shells are shrunk by a skin so resting contact never wedges an object;
    penetration stays far below the 1e-6 contact tolerance.
    """
    best = d_free
    blocker = None
    hit_table = False
    r0 = obj.bounding_radius()
    c0 = (obj.x, obj.y)
    for o in world.objects:
        if o.obj_id == obj.obj_id:
            continue
        if statics_only and o.role != STATIC:
            continue
        if isinstance(o.shape, Disc):
            t = ray_hit_disc(c0, dirn, best, (o.x, o.y),
                             r0 + o.shape.radius - _SKIN)
        else:
            t = ray_hit_box(c0, dirn, best, o, r0 - _SKIN)
        if t is not None and t < best:
            best, blocker = t, o
    t = ray_exit_table(c0, dirn, best, world.table, r0 - _SKIN)
    if t is not None and t < best:
        best, blocker, hit_table = t, None, True
    return best, blocker, hit_table


def _slide_chain(world: Environment, obj: SceneObject, dirn: np.ndarray,
                 v0: float, depth: int, step: int, contacts: list[Contact],
                 flags: dict, kappa: float, dtheta: float,
                 max_chain_depth: int) -> None:
    """Slide obj with initial speed v0 along dirn, handing leftover impulse
    to whatever movable it runs into."""
    mu = world.effective_mu(obj)
    g = world.gravity_accel
    d_free = v0 * v0 / (2.0 * mu * g)
    dist, blocker, hit_table = _stop_distance(world, obj, dirn, d_free)
    obj.x += dirn[0] * dist
    obj.y += dirn[1] * dist
    if hit_table:
        flags["off_table"] = True
    if blocker is None or blocker.role == STATIC or depth >= max_chain_depth:
        return
    v_rem = math.sqrt(max(0.0, v0 * v0 - 2.0 * mu * g * dist))
    if v_rem <= 1e-12:
        return
    n2 = contact_normal((obj.x, obj.y), blocker)
    if n2 is None:
        return
    if dtheta != 0.0:
        n2 = _rotate(n2, dtheta)
    contacts.append(Contact(step, blocker.obj_id, (float(n2[0]), float(n2[1]))))
    v02 = kappa * max(0.0, v_rem * float(dirn @ n2))
    if v02 > 1e-12:
        _slide_chain(world, blocker, n2, v02, depth + 1, step, contacts,
                     flags, kappa, dtheta, max_chain_depth)


def _drag_target(world: Environment, tgt: SceneObject, dest: np.ndarray,
                 flags: dict) -> None:
    """Carry the grasped target toward dest; statics and the table edge
    still block (the carry is planar, not an overhead lift), movables are
    passed over."""
    dx = float(dest[0]) - tgt.x
    dy = float(dest[1]) - tgt.y
    L = math.hypot(dx, dy)
    if L < 1e-12:
        return
    dirn = np.array([dx / L, dy / L])
    dist, _, hit_table = _stop_distance(world, tgt, dirn, L, statics_only=True)
    tgt.x += dirn[0] * dist
    tgt.y += dirn[1] * dist
    if hit_table:
        flags["off_table"] = True


def execute_edge(env: Environment, chain: ChainModel, failure: FailureSpec,
                 edge: Edge, kappa: float = KAPPA_DEFAULT,
                 contact_radius: float = CONTACT_RADIUS,
                 max_chain_depth: int = MAX_CHAIN_DEPTH) -> ExecutionOutcome:
    """Run one edge against a copy of env and report what moved.

    The sweep is processed sample by sample; each touched movable takes an
    impulse kappa * (probe velocity onto the contact normal) and slides.  A
    PM edge that meets the target with its tool heading inside the grasp
    window switches to pick-and-drag for the rest of the sweep.
    """
    for j, a in failure.locked:
        if not np.all(edge.trace[:, j] == a):
            raise ValueError(f"edge {edge.edge_id} does not hold joint {j} locked")
    world = env.clone()
    dtheta = 0.0
    if world.perturbation is not None and world.perturbation.sigma_theta > 0.0:
        # one heading error per action, applied to every normal it produces
        dtheta = float(world.perturbation.sigma_theta
                       * world.perturbation.rng.standard_normal())
    tgt = world.target()
    start = tgt.center
    contacts: list[Contact] = []
    flags = {"off_table": False}
    grabbed = False
    sweep = edge.sweep
    dt = edge.control.dt
    for k in range(len(sweep)):
        p = sweep[k]
        if k == 0:
            v = (sweep[1] - sweep[0]) / dt
        else:
            v = (sweep[k] - sweep[k - 1]) / dt
        if grabbed:
            _drag_target(world, tgt, p, flags)
            continue
        for obj in world.objects:
            if obj.role == STATIC:
                continue
            if surface_gap(p, obj) > contact_radius:
                continue
            if edge.mode == PM and obj.role == TARGET:
                heading = float(frame_angles(chain, edge.trace[k])[-1])
                ray = orientation_ray(chain, obj.center)
                if heading_band_error(heading, ray,
                                      DEFAULT_ORIENTATION_WINDOW) == 0.0:
                    grabbed = True
                    speed = float(np.hypot(v[0], v[1]))
                    d = v / speed if speed > 1e-12 else np.array([1.0, 0.0])
                    contacts.append(Contact(k, obj.obj_id,
                                            (float(d[0]), float(d[1]))))
                    _drag_target(world, tgt, p, flags)
                    break
            n = contact_normal(p, obj)
            if n is None:
                continue
            if dtheta != 0.0:
                n = _rotate(n, dtheta)
            contacts.append(Contact(k, obj.obj_id, (float(n[0]), float(n[1]))))
            v0 = kappa * max(0.0, float(v @ n))
            if v0 > 1e-12:
                _slide_chain(world, obj, n, v0, 1, k, contacts, flags,
                             kappa, dtheta, max_chain_depth)
    return ExecutionOutcome(env_after=world, contacts=contacts,
                            target_displacement=tgt.center - start,
                            any_object_off_table=flags["off_table"],
                            grabbed=grabbed)


def total_obstacle_displacement(before: Environment, after: Environment) -> float:
    """Summed centroid travel of every non-target movable."""
    total = 0.0
    for o in before.objects:
        if o.role != STATIC and o.role != TARGET:
            o2 = after.obj(o.obj_id)
            total += math.hypot(o2.x - o.x, o2.y - o.y)
    return total


def sweep_blocked(edge: Edge, env: Environment,
                  contact_radius: float = CONTACT_RADIUS) -> bool:
    """True when the edge's probe path would plough into a static obstacle;
    bundles are scene-independent, so planners screen edges with this."""
    from .scene import segment_surface_gap
    for s in env.statics():
        for k in range(len(edge.sweep) - 1):
            if segment_surface_gap(edge.sweep[k], edge.sweep[k + 1], s) <= contact_radius:
                return True
    return False
