"""Numerical laboratory for groups of sphere diffeomorphisms generated by rotations,
twists and Mobius maps: word growth, derivative cocycles, averaged metrics and
near-recurrence."""

__version__ = "0.1.0"

from .diffeo import Diffeomorphism, Mobius, Rotation, Twist  # noqa: E402
from .words import GeneratorSet, enumerate_ball  # noqa: E402

__all__ = ["Diffeomorphism", "GeneratorSet", "Mobius", "Rotation", "Twist", "__version__", "enumerate_ball"]
