"""Forward/inverse kinematics for the planar chain.

The inverse solver is damped least squares over the free joints only, with
seeded random restarts.  Grasp-mode (PM) solves constrain the tool heading
to a band about the hub->target ray; contact-mode (NPM) solves are
position-only and may use any interaction point.
"""

from __future__ import annotations

import math

import numpy as np

from .chain import (NO_FAILURE, NPM, PM, ChainModel, FailureSpec,
                    InteractionMode, PlanarPose, wrap_angle)

# Damped-least-squares solver constants.
DLS_LAMBDA = 0.05
IK_MAX_RESTARTS = 20
IK_MAX_ITERS = 200
IK_TOL_POS = 1e-3
IK_TOL_ORI = 1e-2
_STEP_CLAMP = 0.5          # max joint-space step per iteration [rad]
_STALL_ITERS = 10          # restart abandoned after this many non-improving steps
_STALL_EPS = 1e-9


def frame_angles(chain: ChainModel, q: np.ndarray) -> np.ndarray:
    """Absolute heading of each link: base heading + cumulative joint angles."""
    return chain.base_pose.theta + np.cumsum(np.asarray(q, dtype=float))


def joint_positions(chain: ChainModel, q: np.ndarray) -> np.ndarray:
    """World positions of the N joint origins, shape (N, 2)."""
    phi = frame_angles(chain, q)
    steps = np.empty((chain.n_joints, 2))
    steps[:, 0] = np.array(chain.link_lengths) * np.cos(phi)
    steps[:, 1] = np.array(chain.link_lengths) * np.sin(phi)
    pos = np.empty((chain.n_joints, 2))
    pos[0] = chain.base_pose.xy
    if chain.n_joints > 1:
        pos[1:] = chain.base_pose.xy + np.cumsum(steps[:-1], axis=0)
    return pos


def point_position(chain: ChainModel, q: np.ndarray, point_name: str = "end_effector") -> np.ndarray:
    p = chain.point(point_name)
    phi = frame_angles(chain, q)
    z = joint_positions(chain, q)
    return z[p.link] + p.offset * np.array([math.cos(phi[p.link]), math.sin(phi[p.link])])


def forward_kinematics(chain: ChainModel, q: np.ndarray,
                       point_name: str = "end_effector") -> PlanarPose:
    """Pose of a named interaction point; heading is the carrying link's."""
    p = chain.point(point_name)
    phi = frame_angles(chain, q)
    xy = point_position(chain, q, point_name)
    return PlanarPose(float(xy[0]), float(xy[1]), float(phi[p.link]))


def point_positions_batch(chain: ChainModel, Q: np.ndarray, point_name: str) -> np.ndarray:
    """Positions of one named point for a batch of configurations (S, N) -> (S, 2)."""
    p = chain.point(point_name)
    Q = np.asarray(Q, dtype=float)
    phi = chain.base_pose.theta + np.cumsum(Q, axis=1)
    lengths = np.array(chain.link_lengths).copy()
    lengths[p.link] = p.offset
    phi_used = phi[:, :p.link + 1]
    l_used = lengths[:p.link + 1]
    x = chain.base_pose.x + (l_used * np.cos(phi_used)).sum(axis=1)
    y = chain.base_pose.y + (l_used * np.sin(phi_used)).sum(axis=1)
    return np.stack([x, y], axis=1)


def jacobian(chain: ChainModel, q: np.ndarray, point_name: str = "end_effector",
             failure: FailureSpec = NO_FAILURE) -> np.ndarray:
    """3xN task Jacobian of a named point; seized-joint columns are exactly zero.

    Rows are (x, y, heading).  Column j of the position block is the usual
    revolute term rot90(p - z_j) for joints at or before the carrying link.
    """
    p = chain.point(point_name)
    z = joint_positions(chain, q)
    pos = point_position(chain, q, point_name)
    n = chain.n_joints
    J = np.zeros((3, n))
    for j in range(p.link + 1):
        r = pos - z[j]
        J[0, j] = -r[1]
        J[1, j] = r[0]
        J[2, j] = 1.0
    if not failure.is_empty():
        J[:, ~failure.mask(n)] = 0.0
    return J


def manipulability(chain: ChainModel, q: np.ndarray,
                   failure: FailureSpec = NO_FAILURE,
                   point_name: str = "end_effector") -> float:
    """sqrt(det(J J^T)) over the position rows and free columns.

    Degenerate Jacobians (fewer than two free columns, or singular) give 0.
    """
    J = jacobian(chain, q, point_name, failure)
    Jp = J[:2][:, failure.mask(chain.n_joints)]
    if Jp.shape[1] < 2:
        return 0.0
    g = Jp @ Jp.T
    det = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
    return math.sqrt(det) if det > 0.0 else 0.0


def orientation_ray(chain: ChainModel, target_xy: np.ndarray) -> float:
    """Heading of the ray from the chain base to the target."""
    d = np.asarray(target_xy, dtype=float) - chain.base_pose.xy
    return math.atan2(d[1], d[0])


def heading_band_error(heading: float, ray: float,
                       window: tuple[float, float]) -> float:
    """Signed circular distance from heading to the band ray+window; 0 inside."""
    rel = wrap_angle(heading - ray)
    lo, hi = window
    if lo <= rel <= hi:
        return 0.0
    d_hi = wrap_angle(rel - hi)
    d_lo = wrap_angle(rel - lo)
    return d_hi if abs(d_hi) <= abs(d_lo) else d_lo


def _dls_refine(q: list, l_eff: list, bx: float, by: float, bth: float,
                act: list, lo: list, hi: list, tx: float, ty: float,
                pm: bool, ray: float, window, max_iters: int) -> bool:
    """One DLS descent from q (mutated in place); True when solved.

    Scalar math throughout: for the 3-4 joint chains this runs on, plain
    floats are an order of magnitude faster than array ops, and the reach
    mapper calls this millions of times.
    """
    m = len(l_eff)
    lam2 = DLS_LAMBDA * DLS_LAMBDA
    best = math.inf
    stall = 0
    zx = [0.0] * m
    zy = [0.0] * m
    for _ in range(max_iters):
        phi = bth
        x, y = bx, by
        for j in range(m):
            zx[j] = x
            zy[j] = y
            phi += q[j]
            x += l_eff[j] * math.cos(phi)
            y += l_eff[j] * math.sin(phi)
        ex = tx - x
        ey = ty - y
        pos_err = math.hypot(ex, ey)
        if pm:
            eo = -heading_band_error(phi, ray, window)
            if pos_err <= IK_TOL_POS and abs(eo) <= IK_TOL_ORI:
                return True
            norm = math.sqrt(ex * ex + ey * ey + eo * eo)
        else:
            if pos_err <= IK_TOL_POS:
                return True
            norm = pos_err
        if norm < best - _STALL_EPS:
            best = norm
            stall = 0
        else:
            stall += 1
            if stall >= _STALL_ITERS:
                return False
        # normal equations over the active columns
        if pm:
            a = b = c = d = e = 0.0
            for j in act:
                jx = -(y - zy[j])
                jy = x - zx[j]
                a += jx * jx
                b += jx * jy
                c += jy * jy
                d += jx
                e += jy
            nact = float(len(act))
            a += lam2
            c += lam2
            f = nact + lam2
            # solve [[a,b,d],[b,c,e],[d,e,f]] y = (ex, ey, eo)
            A11 = c * f - e * e
            A12 = e * d - b * f
            A13 = b * e - c * d
            det = a * A11 + b * A12 + d * A13
            if det == 0.0:
                return False
            A22 = a * f - d * d
            A23 = b * d - a * e
            A33 = a * c - b * b
            y1 = (A11 * ex + A12 * ey + A13 * eo) / det
            y2 = (A12 * ex + A22 * ey + A23 * eo) / det
            y3 = (A13 * ex + A23 * ey + A33 * eo) / det
        else:
            a = b = c = 0.0
            for j in act:
                jx = -(y - zy[j])
                jy = x - zx[j]
                a += jx * jx
                b += jx * jy
                c += jy * jy
            a += lam2
            c += lam2
            det = a * c - b * b
            if det == 0.0:
                return False
            y1 = (c * ex - b * ey) / det
            y2 = (a * ey - b * ex) / det
            y3 = 0.0
        step2 = 0.0
        dq = []
        for j in act:
            jx = -(y - zy[j])
            jy = x - zx[j]
            d_j = jx * y1 + jy * y2 + y3
            dq.append(d_j)
            step2 += d_j * d_j
        scale = 1.0
        step = math.sqrt(step2)
        if step > _STEP_CLAMP:
            scale = _STEP_CLAMP / step
        for j, d_j in zip(act, dq):
            v = q[j] + scale * d_j
            if v < lo[j]:
                v = lo[j]
            elif v > hi[j]:
                v = hi[j]
            q[j] = v
    return False


def inverse_kinematics(chain: ChainModel, failure: FailureSpec,
                       target_xy: np.ndarray, mode: InteractionMode,
                       seed, start: np.ndarray | None = None,
                       max_restarts: int = IK_MAX_RESTARTS,
                       max_iters: int = IK_MAX_ITERS) -> np.ndarray | None:
    """Damped-least-squares IK with random restarts; None when no solution.

    seed may be an int or a numpy Generator; all restart draws come from it,
    so results are bit-for-bit reproducible for a given seed.  start, when
    given, replaces the neutral configuration as the first restart.
    max_restarts/max_iters trim the default budget; callers that already
    retry at a higher level (the reach mapper) pass smaller caps.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    target = np.asarray(target_xy, dtype=float)
    n = chain.n_joints
    free = failure.mask(n)
    n_free = int(free.sum())
    tx, ty = float(target[0]), float(target[1])
    ray = orientation_ray(chain, target)
    pm = mode.kind == PM

    # Cheap reject: target beyond any possible stretch of the active point.
    reach = chain.max_reach(mode.interaction_point)
    bx, by = float(chain.base_pose.x), float(chain.base_pose.y)
    if math.hypot(tx - bx, ty - by) > reach + IK_TOL_POS:
        return None

    point = chain.point(mode.interaction_point)
    l_eff = [float(v) for v in chain.link_lengths[:point.link]] + [float(point.offset)]
    act = [j for j in range(point.link + 1) if free[j]]

    if n_free == 0 or not act:
        # nothing the solver can move; the frozen posture either hits or not
        q = failure.clamp(start if start is not None else np.zeros(n))
        probe = [float(v) for v in q[:point.link + 1]]
        solved = _dls_refine(probe, l_eff, bx, by, float(chain.base_pose.theta),
                             [], [0.0] * n, [0.0] * n, tx, ty, pm, ray,
                             mode.orientation_window, 1)
        return q if solved else None

    lo = chain.limits_lo()
    hi = chain.limits_hi()
    lo_l = [float(v) for v in lo]
    hi_l = [float(v) for v in hi]
    bth = float(chain.base_pose.theta)

    for restart in range(max_restarts):
        if restart == 0:
            q0 = failure.clamp(start if start is not None else chain.neutral_config(failure))
        else:
            q0 = failure.clamp(lo + rng.random(n) * (hi - lo))
        q = [float(v) for v in q0]
        if _dls_refine(q, l_eff, bx, by, bth, act, lo_l, hi_l, tx, ty,
                       pm, ray, mode.orientation_window, max_iters):
            out = np.array(q0, dtype=float)
            for j in range(point.link + 1):
                out[j] = q[j]
            return failure.clamp(out)
    return None
