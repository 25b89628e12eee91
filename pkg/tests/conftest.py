"""Shared chain fixtures used across the test suite."""

import numpy as np
import pytest

from pokeplan.chain import ChainModel, FailureSpec, InteractionPoint, PlanarPose


def make_twolink(base=PlanarPose(0.0, 0.0, 0.0)) -> ChainModel:
    """Unit 2-link arm used for every analytic oracle."""
    return ChainModel(
        link_lengths=(1.0, 1.0),
        link_masses=(1.0, 1.0),
        link_inertias=(1.0 / 12.0, 1.0 / 12.0),
        joint_limits=((-np.pi, np.pi), (-np.pi, np.pi)),
        velocity_limits=(5.0, 5.0),
        torque_limits=(50.0, 50.0),
        friction=((0.1, 0.05), (0.1, 0.05)),
        interaction_points=(
            InteractionPoint("end_effector", 1, 1.0),
            InteractionPoint("wrist", 1, 0.0),
            InteractionPoint("forearm", 0, 0.5),
        ),
        base_pose=base,
        name="twolink",
    )


def make_fourlink() -> ChainModel:
    """Desk-scale 4-link arm; same geometry as the shipped config."""
    lengths = (0.25, 0.30, 0.20, 0.12)
    masses = (0.8, 0.7, 0.5, 0.3)
    return ChainModel(
        link_lengths=lengths,
        link_masses=masses,
        link_inertias=tuple(m * l * l / 12.0 for m, l in zip(masses, lengths)),
        joint_limits=((-2.96, 2.96),) * 4,
        velocity_limits=(2.5, 2.5, 2.5, 2.5),
        torque_limits=(30.0, 20.0, 10.0, 5.0),
        friction=((0.05, 0.02),) * 4,
        interaction_points=(
            InteractionPoint("end_effector", 3, 0.12),
            InteractionPoint("wrist", 2, 0.20),
            InteractionPoint("forearm", 1, 0.30),
        ),
        base_pose=PlanarPose(0.6, 0.0, np.pi / 2.0),
        name="fourlink",
    )


@pytest.fixture
def twolink() -> ChainModel:
    return make_twolink()


@pytest.fixture
def fourlink() -> ChainModel:
    return make_fourlink()


@pytest.fixture
def fc1() -> FailureSpec:
    return FailureSpec.from_dict({1: 0.8, 3: 0.9})


@pytest.fixture
def fc2() -> FailureSpec:
    return FailureSpec.from_dict({2: 0.0, 3: 2.8})
