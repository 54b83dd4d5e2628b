import math

import numpy as np
import pytest

from burnside_lab.diffeo import Mobius, Rotation, Twist
from burnside_lab.words import GeneratorSet

FREE_ANGLE = math.acos(1.0 / 3.0)


def free_rotations():
    return GeneratorSet.of(Rotation((0, 0, 1), FREE_ANGLE), Rotation((1, 0, 0), FREE_ANGLE), names=("a", "b"))


def cyclic4():
    return GeneratorSet.of(Rotation((0, 0, 1), math.pi / 2), names=("r",))


def octahedral():
    return GeneratorSet.of(Rotation((0, 0, 1), math.pi / 2), Rotation((1, 0, 0), math.pi / 2), names=("a", "b"))


def commuting_twists():
    return GeneratorSet.of(Twist((0, 0, 1), 1.0), Twist((0, 0, 1), math.sqrt(2.0)), names=("a", "b"))


def linked_twists():
    return GeneratorSet.of(Twist((0, 0, 1), 2.0), Twist((1, 0, 0), 2.0), names=("a", "b"))


def mixed():
    return GeneratorSet.of(Rotation((0, 1, 0), 0.7), Twist((1, 0, 0), 1.3),
                           Mobius.normalized(1.2 + 0.3j, 0.4, -0.2j, 0.9), names=("r", "t", "m"))


ALL_SETS = {
    "free-rotations": free_rotations,
    "cyclic4": cyclic4,
    "so3-baseline": octahedral,
    "commuting-twists": commuting_twists,
    "linked-twists": linked_twists,
}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
