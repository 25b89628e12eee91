"""Dynamics oracles: parallel-axis single link, FD mass-matrix gradient,
skew-symmetry of dMdt - 2C, energy balance, and resolved accelerations."""

import dataclasses

import numpy as np
import pytest

from pokeplan.chain import NO_FAILURE, ChainModel, FailureSpec, InteractionPoint, PlanarPose
from pokeplan.dynamics import (JOINT_ACCELERATION, JOINT_POSITION,
               JOINT_VELOCITY, MANIPULABILITY, TORQUE, check_limits,
               coriolis_matrix, euler_step, gravity_torque, inverse_dynamics,
               jacobian_dot, joint_friction, kinetic_energy, mass_matrix,
               mass_matrix_gradient, resolve_joint_velocity,
               resolved_acceleration)
from pokeplan.kinematics import jacobian, manipulability, point_position


def make_single_link(gravity=(0.0, 0.0)) -> ChainModel:
    return ChainModel(
        link_lengths=(1.0,),
        link_masses=(1.0,),
        link_inertias=(1.0 / 12.0,),
        joint_limits=((-np.pi, np.pi),),
        velocity_limits=(5.0,),
        torque_limits=(50.0,),
        friction=((0.1, 0.05),),
        interaction_points=(
            InteractionPoint("end_effector", 0, 1.0),
            InteractionPoint("wrist", 0, 0.5),
            InteractionPoint("forearm", 0, 0.25),
        ),
        gravity=gravity,
        name="onelink",
    )


def frictionless(chain: ChainModel) -> ChainModel:
    return dataclasses.replace(chain, friction=((0.0, 0.0),) * chain.n_joints)


def fd_mass_gradient(chain, q, h=1e-6):
    n = chain.n_joints
    dM = np.zeros((n, n, n))
    for m in range(n):
        qp = np.array(q)
        qm = np.array(q)
        qp[m] += h
        qm[m] -= h
        dM[m] = (mass_matrix(chain, qp) - mass_matrix(chain, qm)) / (2 * h)
    return dM


class TestMassMatrix:
    def test_single_link_parallel_axis(self):
        M = mass_matrix(make_single_link(), np.array([0.7]))
        assert M.shape == (1, 1)
        assert M[0, 0] == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_symmetric_exact(self, fourlink):
        rng = np.random.default_rng(31)
        for _ in range(100):
            M = mass_matrix(fourlink, rng.uniform(-2.9, 2.9, size=4))
            assert np.array_equal(M, M.T)

    def test_positive_definite(self, fourlink):
        rng = np.random.default_rng(32)
        for _ in range(1000):
            M = mass_matrix(fourlink, rng.uniform(-2.9, 2.9, size=4))
            assert np.linalg.eigvalsh(M).min() > 0.0

    def test_gradient_matches_fd(self, fourlink):
        rng = np.random.default_rng(33)
        for _ in range(50):
            q = rng.uniform(-2.9, 2.9, size=4)
            dM = mass_matrix_gradient(fourlink, q)
            dM_fd = fd_mass_gradient(fourlink, q)
            assert np.abs(dM - dM_fd).max() <= 1e-6


class TestCoriolis:
    def test_skew_defect(self, fourlink):
        rng = np.random.default_rng(34)
        h = 1e-6
        for _ in range(500):
            q = rng.uniform(-2.9, 2.9, size=4)
            qd = rng.uniform(-2.0, 2.0, size=4)
            C = coriolis_matrix(fourlink, q, qd)
            Mdot = (mass_matrix(fourlink, q + h * qd)
                    - mass_matrix(fourlink, q - h * qd)) / (2 * h)
            S = Mdot - 2.0 * C
            assert np.abs(S + S.T).max() <= 1e-8

    def test_energy_balance(self, fourlink):
        chain = frictionless(fourlink)
        rng = np.random.default_rng(35)
        h = 1e-6
        for _ in range(200):
            q = rng.uniform(-2.9, 2.9, size=4)
            qd = rng.uniform(-2.0, 2.0, size=4)
            qdd = rng.uniform(-3.0, 3.0, size=4)
            tau = inverse_dynamics(chain, q, qd, qdd)
            power = float(qd @ tau)
            ke_p = kinetic_energy(chain, q + h * qd, qd + h * qdd)
            ke_m = kinetic_energy(chain, q - h * qd, qd - h * qdd)
            assert power == pytest.approx((ke_p - ke_m) / (2 * h), abs=1e-6)

    def test_zero_velocity_zero_matrix(self, fourlink):
        C = coriolis_matrix(fourlink, np.array([0.3, -0.7, 1.1, 0.2]), np.zeros(4))
        assert np.allclose(C, 0.0, atol=1e-15)


class TestGravityAndFriction:
    def test_horizontal_table_zero(self, fourlink):
        rng = np.random.default_rng(36)
        for _ in range(20):
            g = gravity_torque(fourlink, rng.uniform(-2.9, 2.9, size=4))
            assert np.array_equal(g, np.zeros(4))

    def test_vertical_single_link(self):
        chain = make_single_link(gravity=(0.0, -9.81))
        g = gravity_torque(chain, np.array([0.0]))
        assert g[0] == pytest.approx(4.905, abs=1e-9)
        # straight up: no moment arm
        assert gravity_torque(chain, np.array([np.pi / 2]))[0] == pytest.approx(0.0, abs=1e-9)

    def test_friction_law(self, fourlink):
        qd = np.array([1.0, -2.0, 0.0, 0.5])
        f = joint_friction(fourlink, qd)
        visc, coul = 0.05, 0.02
        expect = visc * qd + coul * np.sign(qd)
        assert np.allclose(f, expect, atol=1e-15)
        assert f[2] == 0.0  # sign(0) contributes nothing

    def test_inverse_dynamics_single_link(self):
        chain = frictionless(make_single_link())
        tau = inverse_dynamics(chain, np.array([0.4]), np.zeros(1), np.array([3.0]))
        assert tau[0] == pytest.approx(1.0, abs=1e-12)


class TestResolvedAcceleration:
    def test_handworked_inverse(self, twolink):
        qdd = resolved_acceleration(twolink, np.array([0.0, np.pi / 2]),
                                    np.zeros(2), np.array([1.0, 0.0]))
        assert np.allclose(qdd, [0.0, -1.0], atol=1e-3)

    def test_stationary_no_drive(self, fourlink):
        qdd = resolved_acceleration(fourlink, np.array([0.5, -0.3, 0.8, 0.1]),
                                    np.zeros(4), np.zeros(2))
        assert np.allclose(qdd, 0.0, atol=1e-12)

    def test_seized_rows_zero(self, fourlink, fc2):
        q = fc2.clamp(np.array([0.4, -0.2, 0.0, 0.0]))
        qd = resolve_joint_velocity(fourlink, q, np.array([0.1, 0.05]),
                                    failure=fc2)
        assert qd[2] == 0.0 and qd[3] == 0.0
        qdd = resolved_acceleration(fourlink, q, qd, np.zeros(2), failure=fc2)
        assert qdd[2] == 0.0 and qdd[3] == 0.0

    def test_jacobian_dot_matches_fd(self, fourlink):
        rng = np.random.default_rng(37)
        h = 1e-6
        for _ in range(50):
            q = rng.uniform(-2.5, 2.5, size=4)
            qd = rng.uniform(-1.5, 1.5, size=4)
            Jd = jacobian_dot(fourlink, q, qd)
            J_p = jacobian(fourlink, q + h * qd)[:2]
            J_m = jacobian(fourlink, q - h * qd)[:2]
            assert np.abs(Jd - (J_p - J_m) / (2 * h)).max() <= 1e-6

    def test_velocity_resolution_tracks_task(self, fourlink):
        q = np.array([0.4, 0.6, -0.5, 0.3])
        u = np.array([0.2, -0.1])
        qd = resolve_joint_velocity(fourlink, q, u)
        v = jacobian(fourlink, q)[:2] @ qd
        # damped solve carries an O(lambda^2 * cond) bias, not an exact inverse
        assert np.allclose(v, u, atol=5e-3)


class TestLimitGate:
    def test_all_clear(self, fourlink):
        rep = check_limits(fourlink, np.zeros(4), np.zeros(4), np.zeros(4),
                           np.zeros(4), manip=0.1)
        assert not rep.violated and rep.which is None

    def test_each_kind_and_order(self, fourlink):
        bad_q = np.array([3.5, 0, 0, 0])
        assert check_limits(fourlink, bad_q, np.zeros(4), np.zeros(4),
                            np.zeros(4), 0.1).which == JOINT_POSITION
        assert check_limits(fourlink, np.zeros(4), np.array([3.0, 0, 0, 0]),
                            np.zeros(4), np.zeros(4), 0.1).which == JOINT_VELOCITY
        assert check_limits(fourlink, np.zeros(4), np.zeros(4),
                            np.array([11.0, 0, 0, 0]), np.zeros(4), 0.1).which == JOINT_ACCELERATION
        assert check_limits(fourlink, np.zeros(4), np.zeros(4), np.zeros(4),
                            np.array([31.0, 0, 0, 0]), 0.1).which == TORQUE
        assert check_limits(fourlink, np.zeros(4), np.zeros(4), np.zeros(4),
                            np.zeros(4), 0.001).which == MANIPULABILITY
        # position outranks the rest when several trip at once
        rep = check_limits(fourlink, bad_q, np.array([3.0, 0, 0, 0]),
                           np.zeros(4), np.zeros(4), 0.001)
        assert rep.which == JOINT_POSITION

    def test_manip_gate_skipped_below_two_free(self, twolink):
        failure = FailureSpec.from_dict({1: 0.5})
        rep = check_limits(twolink, failure.clamp(np.zeros(2)), np.zeros(2),
                           np.zeros(2), np.zeros(2), manip=0.0, failure=failure)
        assert not rep.violated


class TestEulerStep:
    def test_exact_update(self):
        q = np.array([0.125, -0.5])
        qd = np.array([0.25, 1.5])
        out = euler_step(q, qd, 0.5)
        assert np.array_equal(out, q + qd * 0.5)
