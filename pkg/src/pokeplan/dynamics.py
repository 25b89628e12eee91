"""Rigid-body dynamics of the planar chain and the per-step feasibility gate.

The mass matrix comes from the composite lever form

    M[i, j] = sum_{k >= max(i, j)} I_k + m_k * (p_k - z_i) . (p_k - z_j)

with p_k the CoM of link k and z_i the origin of joint i; its configuration
gradient is differentiated in closed form so the Coriolis matrix is an exact
Christoffel construction (dMdt - 2C stays skew to roundoff).  Integration is
deliberately semi-kinematic: positions advance with a held velocity, and
accelerations/torques are only used to test feasibility, never integrated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import NO_FAILURE, ChainModel, FailureSpec
from .kinematics import jacobian, joint_positions, frame_angles

RESOLVE_LAMBDA = 0.01      # damping for task->joint resolution
QDD_MAX_DEFAULT = 10.0     # rad/s^2
MANIP_MIN_DEFAULT = 0.01

JOINT_POSITION = "JointPosition"
JOINT_VELOCITY = "JointVelocity"
JOINT_ACCELERATION = "JointAcceleration"
TORQUE = "Torque"
MANIPULABILITY = "Manipulability"
COLLISION = "Collision"
WORKSPACE_BOUND = "WorkspaceBound"

LIMIT_KINDS = (JOINT_POSITION, JOINT_VELOCITY, JOINT_ACCELERATION, TORQUE,
               MANIPULABILITY, COLLISION, WORKSPACE_BOUND)


@dataclass(frozen=True)
class LimitReport:
    """Outcome of a feasibility check; which names the first violated limit."""

    violated: bool
    which: str | None = None
    value: float = 0.0

    def __bool__(self):  # truthiness == "something violated"
        return self.violated


OK_REPORT = LimitReport(False)


def _com_positions(chain: ChainModel, q: np.ndarray) -> np.ndarray:
    phi = frame_angles(chain, q)
    z = joint_positions(chain, q)
    half = 0.5 * np.array(chain.link_lengths)
    return z + np.stack([half * np.cos(phi), half * np.sin(phi)], axis=1)


def _rot90(v: np.ndarray) -> np.ndarray:
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def _lever_tables(chain: ChainModel, q: np.ndarray):
    """Masked lever arms L[i,k] = (p_k - z_i) for i <= k, zero elsewhere."""
    n = chain.n_joints
    Z = joint_positions(chain, q)
    P = _com_positions(chain, q)
    U = (np.arange(n)[:, None] <= np.arange(n)[None, :]).astype(float)  # i <= k
    L = (P[None, :, :] - Z[:, None, :]) * U[:, :, None]
    return Z, P, U, L


def mass_matrix(chain: ChainModel, q: np.ndarray) -> np.ndarray:
    """Joint-space inertia matrix, exactly symmetric."""
    n = chain.n_joints
    masses = np.array(chain.link_masses)
    inertias = np.array(chain.link_inertias)
    _, _, U, L = _lever_tables(chain, q)
    M = np.einsum("ikc,jkc,k->ij", L, L, masses) + np.einsum("ik,jk,k->ij", U, U, inertias)
    return 0.5 * (M + M.T)


def mass_matrix_gradient(chain: ChainModel, q: np.ndarray) -> np.ndarray:
    """dM/dq as a tensor dM[m, i, j] = d M[i,j] / d q_m, in closed form."""
    n = chain.n_joints
    masses = np.array(chain.link_masses)
    Z, P, U, L = _lever_tables(chain, q)
    # d z_i / d q_m = rot90(z_i - z_m) for m < i
    V = (np.arange(n)[:, None] < np.arange(n)[None, :]).astype(float)     # m < i
    H = (Z[None, :, :] - Z[:, None, :]) * V[:, :, None]
    # d (p_k - z_i) / d q_m, masked to the i <= k support of L
    A = _rot90(L[:, None, :, :] - H[:, :, None, :]) * U[None, :, :, None]
    dM = (np.einsum("mikc,jkc,k->mij", A, L, masses)
          + np.einsum("ikc,mjkc,k->mij", L, A, masses))
    return dM


def coriolis_matrix(chain: ChainModel, q: np.ndarray, qd: np.ndarray) -> np.ndarray:
    """Christoffel Coriolis/centrifugal matrix C(q, qd)."""
    dM = mass_matrix_gradient(chain, q)
    qd = np.asarray(qd, dtype=float)
    return 0.5 * (np.einsum("kij,k->ij", dM, qd)
                  + np.einsum("jik,k->ij", dM, qd)
                  - np.einsum("ijk,k->ij", dM, qd))


def gravity_torque(chain: ChainModel, q: np.ndarray) -> np.ndarray:
    """Joint torques holding the arm against in-plane gravity."""
    g = np.array(chain.gravity, dtype=float)
    if not g.any():
        return np.zeros(chain.n_joints)
    masses = np.array(chain.link_masses)
    _, _, _, L = _lever_tables(chain, q)
    # tau_i = -sum_k m_k g . rot90(L[i,k])
    return -np.einsum("ikc,c,k->i", _rot90(L), g, masses)


def joint_friction(chain: ChainModel, qd: np.ndarray) -> np.ndarray:
    """Viscous plus Coulomb joint friction torque; sign(0) = 0."""
    qd = np.asarray(qd, dtype=float)
    fr = np.array(chain.friction)
    return fr[:, 0] * qd + fr[:, 1] * np.sign(qd)


def inverse_dynamics(chain: ChainModel, q: np.ndarray, qd: np.ndarray,
                     qdd: np.ndarray) -> np.ndarray:
    """tau = M qdd + C qd + g + f."""
    M = mass_matrix(chain, q)
    C = coriolis_matrix(chain, q, qd)
    return M @ np.asarray(qdd, dtype=float) + C @ np.asarray(qd, dtype=float) \
        + gravity_torque(chain, q) + joint_friction(chain, qd)


def kinetic_energy(chain: ChainModel, q: np.ndarray, qd: np.ndarray) -> float:
    qd = np.asarray(qd, dtype=float)
    return 0.5 * float(qd @ mass_matrix(chain, q) @ qd)


def _damped_solve(J: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    g = J @ J.T + (RESOLVE_LAMBDA ** 2) * np.eye(J.shape[0])
    return J.T @ np.linalg.solve(g, rhs)


def jacobian_dot(chain: ChainModel, q: np.ndarray, qd: np.ndarray,
                 point_name: str = "end_effector") -> np.ndarray:
    """Time derivative of the position-block Jacobian (2xN)."""
    p = chain.point(point_name)
    n = chain.n_joints
    qd = np.asarray(qd, dtype=float)
    Z = joint_positions(chain, q)
    Jp = jacobian(chain, q, point_name)[:2]
    v_point = Jp @ qd
    Jd = np.zeros((2, n))
    for i in range(p.link + 1):
        # velocity of joint origin i
        v_zi = np.zeros(2)
        for j in range(i):
            r = Z[i] - Z[j]
            v_zi += qd[j] * np.array([-r[1], r[0]])
        rel = v_point - v_zi
        Jd[:, i] = [-rel[1], rel[0]]
    return Jd


def resolve_joint_velocity(chain: ChainModel, q: np.ndarray, u: np.ndarray,
                           point_name: str = "end_effector",
                           failure: FailureSpec = NO_FAILURE) -> np.ndarray:
    """Joint velocity realizing task velocity u at a point; seized joints stay 0."""
    free = failure.mask(chain.n_joints)
    qd = np.zeros(chain.n_joints)
    if not free.any():
        return qd
    J = jacobian(chain, q, point_name)[:2][:, free]
    qd[free] = _damped_solve(J, np.asarray(u, dtype=float))
    return qd


def resolved_acceleration(chain: ChainModel, q: np.ndarray, qd: np.ndarray,
                          udot: np.ndarray, point_name: str = "end_effector",
                          failure: FailureSpec = NO_FAILURE) -> np.ndarray:
    """Joint acceleration tracking task acceleration udot at a point.

    qdd = Jpinv (udot - Jdot qd) over position rows and free columns; the
    seized coordinates come back exactly zero.
    """
    free = failure.mask(chain.n_joints)
    qdd = np.zeros(chain.n_joints)
    if not free.any():
        return qdd
    rhs = np.asarray(udot, dtype=float) - jacobian_dot(chain, q, qd, point_name) @ np.asarray(qd, dtype=float)
    J = jacobian(chain, q, point_name)[:2][:, free]
    qdd[free] = _damped_solve(J, rhs)
    return qdd


def check_limits(chain: ChainModel, q: np.ndarray, qd: np.ndarray,
                 qdd: np.ndarray, tau: np.ndarray, manip: float,
                 failure: FailureSpec = NO_FAILURE,
                 qdd_max: float = QDD_MAX_DEFAULT,
                 m_min: float = MANIP_MIN_DEFAULT) -> LimitReport:
    """First violated limit among position, velocity, acceleration, torque,
    manipulability; OK report otherwise.

    The manipulability floor only applies with >= 2 free joints: below that
    the 2x k position Gramian is structurally singular and the arm's reduced
    mobility is legitimate rather than a near-singular fault.
    """
    q = np.asarray(q, dtype=float)
    lo = chain.limits_lo()
    hi = chain.limits_hi()
    tol = 1e-9
    if np.any(q < lo - tol) or np.any(q > hi + tol):
        worst = float(np.maximum(lo - q, q - hi).max())
        return LimitReport(True, JOINT_POSITION, worst)
    vel = np.abs(np.asarray(qd, dtype=float)) - np.array(chain.velocity_limits)
    if np.any(vel > tol):
        return LimitReport(True, JOINT_VELOCITY, float(vel.max()))
    acc = np.abs(np.asarray(qdd, dtype=float))
    if np.any(acc > qdd_max + tol):
        return LimitReport(True, JOINT_ACCELERATION, float(acc.max()))
    trq = np.abs(np.asarray(tau, dtype=float)) - np.array(chain.torque_limits)
    if np.any(trq > tol):
        return LimitReport(True, TORQUE, float(trq.max()))
    if int(failure.mask(chain.n_joints).sum()) >= 2 and manip < m_min:
        return LimitReport(True, MANIPULABILITY, float(manip))
    return OK_REPORT


def euler_step(q: np.ndarray, qd: np.ndarray, dt: float) -> np.ndarray:
    """Semi-kinematic position update; the caller keeps qd unchanged."""
    return np.asarray(q, dtype=float) + np.asarray(qd, dtype=float) * dt
