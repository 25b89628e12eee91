"""Planar serial-chain model, seized-joint specs, and small pose types.

Everything downstream (kinematics, dynamics, reachability, edge bundles)
works off the ChainModel defined here.  Links are rigid rods with their
center of mass at mid-length; joints are revolute and actuated unless a
FailureSpec seizes them.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.atan2(math.sin(theta), math.cos(theta))
    # atan2 returns -pi for inputs near pi; keep the half-open convention
    if wrapped <= -math.pi:
        wrapped = math.pi
    return wrapped


@dataclass(frozen=True)
class PlanarPose:
    """Position plus heading in the plane, heading wrapped to (-pi, pi]."""

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class InteractionPoint:
    """Named frame rigidly attached to a link.

    offset is measured along the link axis from the link's proximal joint,
    0 <= offset <= link length.
    """

    name: str
    link: int
    offset: float


PM = "PM"
NPM = "NPM"

# Half-width of the default graspable heading band, measured from the
# hub->target ray.  Grasping is modeled as feasible anywhere in the band.
DEFAULT_ORIENTATION_WINDOW = (-math.pi / 3.0, math.pi / 3.0)


@dataclass(frozen=True)
class InteractionMode:
    """How the arm is asked to meet a target: grasp (PM) or contact (NPM).

    PM constrains the tool heading to orientation_window about the ray from
    the chain base to the target and is only valid with the end_effector
    point.  NPM is position-only and may use any interaction point.
    """

    kind: str
    interaction_point: str = "end_effector"
    orientation_window: tuple[float, float] = DEFAULT_ORIENTATION_WINDOW

    def __post_init__(self):
        if self.kind not in (PM, NPM):
            raise ValueError(f"unknown interaction kind {self.kind!r}")
        if self.kind == PM and self.interaction_point != "end_effector":
            raise ValueError("PM mode requires the end_effector point")
        lo, hi = self.orientation_window
        if not lo < hi:
            raise ValueError("orientation window must have lo < hi")


@dataclass(frozen=True)
class FailureSpec:
    """Set of seized joints and the angles they are stuck at.

    locked maps joint index -> lock angle [rad].  Empty means healthy arm.
    """

    locked: tuple[tuple[int, float], ...] = ()

    @staticmethod
    def from_dict(locked: dict[int, float]) -> "FailureSpec":
        items = tuple(sorted((int(j), float(a)) for j, a in locked.items()))
        return FailureSpec(locked=items)

    @property
    def locked_joints(self) -> tuple[int, ...]:
        return tuple(j for j, _ in self.locked)

    def lock_angle(self, joint: int) -> float:
        for j, a in self.locked:
            if j == joint:
                return a
        raise KeyError(joint)

    def is_empty(self) -> bool:
        return len(self.locked) == 0

    def validate(self, n_joints: int):
        seen = set()
        for j, _ in self.locked:
            if not 0 <= j < n_joints:
                raise ValueError(f"locked joint {j} out of range for {n_joints}-joint chain")
            if j in seen:
                raise ValueError(f"joint {j} locked twice")
            seen.add(j)

    def mask(self, n_joints: int) -> np.ndarray:
        """Boolean mask, True where the joint is free to move."""
        free = np.ones(n_joints, dtype=bool)
        for j, _ in self.locked:
            free[j] = False
        return free

    def clamp(self, q: np.ndarray) -> np.ndarray:
        """Overwrite seized coordinates with their lock angles."""
        out = np.array(q, dtype=float)
        for j, a in self.locked:
            out[j] = a
        return out


NO_FAILURE = FailureSpec()


@dataclass(frozen=True)
class ChainModel:
    """Planar N-link revolute chain bolted to the world at base_pose.

    link_lengths/link_masses/link_inertias: per link; inertia is about the
    link CoM (mid-length).  joint_limits are (lo, hi) pairs; velocity,
    torque limits are symmetric magnitudes.  friction is (viscous, coulomb)
    per joint.  gravity is the in-plane gravity vector; (0, 0) models a
    horizontal tabletop.  interaction_points must contain 'end_effector'
    at the distal end of the last link plus at least two proximal analogs.
    """

    link_lengths: tuple[float, ...]
    link_masses: tuple[float, ...]
    link_inertias: tuple[float, ...]
    joint_limits: tuple[tuple[float, float], ...]
    velocity_limits: tuple[float, ...]
    torque_limits: tuple[float, ...]
    friction: tuple[tuple[float, float], ...]
    interaction_points: tuple[InteractionPoint, ...]
    base_pose: PlanarPose = PlanarPose(0.0, 0.0, 0.0)
    gravity: tuple[float, float] = (0.0, 0.0)
    name: str = "chain"

    def __post_init__(self):
        n = self.n_joints
        if n == 0:
            raise ValueError("chain needs at least one link")
        for attr in ("link_masses", "link_inertias", "joint_limits",
                     "velocity_limits", "torque_limits", "friction"):
            if len(getattr(self, attr)) != n:
                raise ValueError(f"{attr} must have {n} entries")
        if any(l <= 0 for l in self.link_lengths):
            raise ValueError("link lengths must be positive")
        if any(m <= 0 for m in self.link_masses):
            raise ValueError("link masses must be positive")
        if any(i <= 0 for i in self.link_inertias):
            raise ValueError("link inertias must be positive")
        for lo, hi in self.joint_limits:
            if not lo < hi:
                raise ValueError("joint limits need lo < hi")
        names = [p.name for p in self.interaction_points]
        if len(set(names)) != len(names):
            raise ValueError("interaction point names must be unique")
        if "end_effector" not in names:
            raise ValueError("interaction_points must include 'end_effector'")
        if len(names) < 3:
            raise ValueError("need end_effector plus at least two proximal points")
        for p in self.interaction_points:
            if not 0 <= p.link < n:
                raise ValueError(f"interaction point {p.name} on missing link {p.link}")
            if not 0.0 <= p.offset <= self.link_lengths[p.link] + 1e-12:
                raise ValueError(f"interaction point {p.name} offset outside its link")
        ee = self.point("end_effector")
        if ee.link != n - 1 or abs(ee.offset - self.link_lengths[-1]) > 1e-9:
            raise ValueError("end_effector must sit at the distal end of the last link")

    @property
    def n_joints(self) -> int:
        return len(self.link_lengths)

    def point(self, name: str) -> InteractionPoint:
        for p in self.interaction_points:
            if p.name == name:
                return p
        raise KeyError(f"no interaction point named {name!r}")

    def point_names_distal_first(self) -> list[str]:
        """Interaction point names ordered tip-to-hub (escalation order)."""
        pts = sorted(self.interaction_points, key=lambda p: (p.link, p.offset),
                     reverse=True)
        return [p.name for p in pts]

    def max_reach(self, point_name: str = "end_effector") -> float:
        """Upper bound on the distance from base to the named point."""
        p = self.point(point_name)
        return float(sum(self.link_lengths[:p.link]) + p.offset)

    def limits_lo(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.joint_limits])

    def limits_hi(self) -> np.ndarray:
        return np.array([hi for _, hi in self.joint_limits])

    def neutral_config(self, failure: FailureSpec = NO_FAILURE) -> np.ndarray:
        """Mid-range configuration with seized joints at their lock angles."""
        q = 0.5 * (self.limits_lo() + self.limits_hi())
        return failure.clamp(q)

    def canonical_text(self) -> str:
        """Stable text form used for hashing and file embedding."""
        rows = [
            f"name={self.name}",
            "lengths=" + ",".join(repr(float(v)) for v in self.link_lengths),
            "masses=" + ",".join(repr(float(v)) for v in self.link_masses),
            "inertias=" + ",".join(repr(float(v)) for v in self.link_inertias),
            "joint_limits=" + ";".join(f"{repr(float(a))},{repr(float(b))}"
                                       for a, b in self.joint_limits),
            "velocity_limits=" + ",".join(repr(float(v)) for v in self.velocity_limits),
            "torque_limits=" + ",".join(repr(float(v)) for v in self.torque_limits),
            "friction=" + ";".join(f"{repr(float(a))},{repr(float(b))}"
                                   for a, b in self.friction),
            "points=" + ";".join(f"{p.name},{p.link},{repr(float(p.offset))}"
                                 for p in self.interaction_points),
            f"base={repr(float(self.base_pose.x))},{repr(float(self.base_pose.y))},"
            f"{repr(float(self.base_pose.theta))}",
            f"gravity={repr(float(self.gravity[0]))},{repr(float(self.gravity[1]))}",
        ]
        return "\n".join(rows)

    def content_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()


def chain_to_dict(chain: ChainModel) -> dict:
    """Plain-dict form of a chain, lossless under json/yaml round trips."""
    return {
        "name": chain.name,
        "link_lengths": [float(v) for v in chain.link_lengths],
        "link_masses": [float(v) for v in chain.link_masses],
        "link_inertias": [float(v) for v in chain.link_inertias],
        "joint_limits": [[float(a), float(b)] for a, b in chain.joint_limits],
        "velocity_limits": [float(v) for v in chain.velocity_limits],
        "torque_limits": [float(v) for v in chain.torque_limits],
        "friction": [[float(a), float(b)] for a, b in chain.friction],
        "interaction_points": [
            {"name": p.name, "link": p.link, "offset": float(p.offset)}
            for p in chain.interaction_points
        ],
        "base_pose": [float(chain.base_pose.x), float(chain.base_pose.y),
                      float(chain.base_pose.theta)],
        "gravity": [float(chain.gravity[0]), float(chain.gravity[1])],
    }


def chain_from_dict(d: dict) -> ChainModel:
    return ChainModel(
        link_lengths=tuple(d["link_lengths"]),
        link_masses=tuple(d["link_masses"]),
        link_inertias=tuple(d["link_inertias"]),
        joint_limits=tuple((a, b) for a, b in d["joint_limits"]),
        velocity_limits=tuple(d["velocity_limits"]),
        torque_limits=tuple(d["torque_limits"]),
        friction=tuple((a, b) for a, b in d["friction"]),
        interaction_points=tuple(
            InteractionPoint(p["name"], int(p["link"]), float(p["offset"]))
            for p in d["interaction_points"]
        ),
        base_pose=PlanarPose(*d["base_pose"]),
        gravity=(d["gravity"][0], d["gravity"][1]),
        name=d.get("name", "chain"),
    )


def failure_to_dict(failure: FailureSpec) -> dict:
    return {"locked": {str(j): float(a) for j, a in failure.locked}}


def failure_from_dict(d: dict) -> FailureSpec:
    locked = d.get("locked") or {}
    return FailureSpec.from_dict({int(j): float(a) for j, a in locked.items()})


def failure_canonical_text(failure: FailureSpec) -> str:
    if failure.is_empty():
        return "locked=none"
    return "locked=" + ";".join(f"{j},{repr(float(a))}" for j, a in failure.locked)


def failure_content_hash(failure: FailureSpec) -> str:
    return hashlib.sha256(failure_canonical_text(failure).encode()).hexdigest()
