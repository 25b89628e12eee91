"""Recovery toolkit for planar arms with seized joints.

Maps what an impaired arm can still reach (by grasp or by contact), bundles
Monte-Carlo poke motions that respect the arm's remaining dynamics, and
plans object-to-goal tasks by simulating those pokes against a quasi-static
tabletop world.
"""

from .chain import (NO_FAILURE, NPM, PM, ChainModel, FailureSpec,
                    InteractionMode, InteractionPoint, PlanarPose)

__version__ = "0.1.0"

__all__ = [
    "ChainModel", "FailureSpec", "InteractionMode", "InteractionPoint",
    "PlanarPose", "NO_FAILURE", "PM", "NPM", "__version__",
]
