import math

import numpy as np
import pytest

from burnside_lab.diffeo import Diffeomorphism, Rotation, Twist, c0_distance, evaluate, operator_norm_D
from burnside_lab.errors import FixedPointNotFound, PreconditionError, ValidationError
from burnside_lab.recurrence import (
    PIGEONHOLE_CONSTANT,
    TripleConfig,
    conjugated_rotation_family,
    element_order,
    find_fixed_point,
    nearest_pair,
    orbit_hull_diameter,
    pair_distance,
    pigeonhole_bound,
    pigeonhole_pair,
    triple_images,
)
from burnside_lab.sphere import normalize
from burnside_lab.words import GeneratorSet, enumerate_ball

from conftest import commuting_twists, cyclic4, free_rotations, linked_twists, octahedral

GENERIC = TripleConfig(normalize([0.6, 0.48, 0.64]), normalize([-0.8, 0.36, 0.48]), normalize([0.0, -0.8, 0.6]))


def brute_force_pair(images):
    W = len(images)
    best = (math.inf, -1, -1)
    for i in range(W):
        d = pair_distance(images[i][None], images[i + 1:])
        if len(d):
            j = int(np.argmin(d))
            if d[j] < best[0]:
                best = (float(d[j]), i, i + 1 + j)
    return best


@pytest.mark.parametrize("make,n,triple", [
    (free_rotations, 5, None), (free_rotations, 6, GENERIC), (linked_twists, 5, GENERIC),
    (commuting_twists, 12, GENERIC), (cyclic4, 3, GENERIC), (octahedral, 4, None),
    (lambda: GeneratorSet.of(Rotation((0, 0, 1), 2 * math.pi / 7)), 4, GENERIC),
])
def test_pigeonhole_matches_brute_force(make, n, triple):
    S = make()
    ball = enumerate_ball(S, n)
    assert len(ball) <= 5000
    tri = triple or TripleConfig.default()
    imgs = triple_images(ball, tri)
    d, i, j = brute_force_pair(imgs)
    pair = pigeonhole_pair(ball, tri)
    assert pair.triple_distance == d
    assert (pair.g_index, pair.h_index) == (i, j)


def test_cyclic_group_gap():
    S = GeneratorSet.of(Rotation((0, 0, 1), 2 * math.pi / 7))
    pair = pigeonhole_pair(enumerate_ball(S, 6), GENERIC)
    # smallest angular gap 2 pi / 7 seen by the point farthest from the axis
    r = max(math.hypot(p[0], p[1]) for p in GENERIC.array())
    assert pair.triple_distance == pytest.approx(2 * math.asin(r * math.sin(math.pi / 7)), abs=1e-12)


def test_pigeonhole_bound_free_rotations():
    ball = enumerate_ball(free_rotations(), 6)
    assert len(ball) == 1457
    pair = pigeonhole_pair(ball)
    assert pair.triple_distance <= PIGEONHOLE_CONSTANT * 1457 ** (-1 / 6)
    assert pair.bound == pigeonhole_bound(1457)


def test_degenerate_flag():
    S = GeneratorSet.of(Rotation((0, 0, 1), 0.5))
    tri = TripleConfig(np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, -1.0]), np.array([1.0, 0.0, 0.0]))
    assert not pigeonhole_pair(enumerate_ball(S, 2), tri).degenerate
    on_axis = GeneratorSet.of(Twist((1, 0, 0), 1.0))
    tri2 = TripleConfig(np.array([0.0, 0.0, 1.0]), np.array([0.0, 1.0, 0.0]), np.array([0.0, -1.0, 0.0]))
    assert pigeonhole_pair(enumerate_ball(on_axis, 2), tri2).degenerate


def test_pair_distance_is_sup_of_geodesics():
    a = np.eye(3)[None]
    b = np.array([[[0.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]])
    assert pair_distance(a, b)[0] == pytest.approx(math.pi / 2)


def test_triple_validation():
    with pytest.raises(ValidationError):
        TripleConfig(np.array([1.0, 0, 0]), normalize([1.0, 0.01, 0]), np.array([0, 0, 1.0]))


def test_nearest_pair_needs_two():
    with pytest.raises(ValidationError):
        nearest_pair(np.zeros((1, 3, 3)))


def test_newton_linked_twist_fixed_point():
    S = linked_twists()
    for word in (((0, 1), (1, 1)), ((0, 1), (1, -1))):
        rec = find_fixed_point(S.word(word), normalize([0.02, 1.0, 0.01]), 0.5)
        assert np.allclose(rec.point, [0, 1, 0], atol=1e-10)
        assert rec.residual < 1e-12
        again = find_fixed_point(S.word(word), rec.point, 0.5)
        assert np.abs(again.point - rec.point).max() < 1e-12
    assert find_fixed_point(S.word(((0, 1), (1, -1))), normalize([0.02, 1, 0.01]), 0.5).classification == "hyperbolic"
    assert find_fixed_point(S.word(((0, 1), (1, 1))), normalize([0.02, 1, 0.01]), 0.5).classification == "parabolic"


def test_newton_rotation_pole():
    f = Diffeomorphism.of(Rotation((0, 0, 1), 0.3))
    rec = find_fixed_point(f, normalize([0.05, 0.02, 1.0]), 0.5)
    assert np.allclose(rec.point, [0, 0, 1], atol=1e-9)
    assert rec.classification == "elliptic"


def test_newton_not_found_and_precondition():
    f = Diffeomorphism.of(Rotation((0, 0, 1), 0.01))
    with pytest.raises(FixedPointNotFound):
        find_fixed_point(f, np.array([1.0, 0.0, 0.0]), 0.05)
    with pytest.raises(PreconditionError):
        find_fixed_point(Diffeomorphism.of(Rotation((0, 0, 1), 2.0)), np.array([1.0, 0.0, 0.0]), 0.5)


def test_element_order():
    assert element_order(Diffeomorphism.of(Rotation((0, 0, 1), 2 * math.pi / 5)), 64) == 5
    assert element_order(Diffeomorphism.of(Twist((0, 0, 1), 1.0)), 64) is None
    assert element_order(Diffeomorphism.identity(), 3) == 1
    with pytest.raises(ValidationError):
        element_order(Diffeomorphism.identity(), 0)


def test_orbit_hull_bound():
    S = free_rotations()
    pair = pigeonhole_pair(enumerate_ball(S, 6))
    x = TripleConfig.default().x1
    hull = orbit_hull_diameter(pair.f, x, 6)
    assert hull.diameter <= hull.bound * (1 + 1e-9)
    tw = Diffeomorphism.of(Twist((0, 0, 1), 0.05))
    h2 = orbit_hull_diameter(tw, normalize([1.0, 0.0, 0.3]), 5)
    assert h2.diameter <= h2.bound


def test_conjugated_rotation_family():
    R = Rotation((0, 0, 1), 2 * math.pi / 5)
    rows = conjugated_rotation_family(R)
    K = [r.dilatation for r in rows]
    D = [r.distance_to_rotation for r in rows]
    assert all(b <= a * 1.05 for a, b in zip(K, K[1:]))
    assert all(b <= a * 1.05 for a, b in zip(D, D[1:]))
    assert K[-1] < 1.25 and D[-1] < 0.1
    assert all(r.order == 5 for r in rows)
    r_id = c0_distance(Diffeomorphism.of(R), Diffeomorphism.identity())
    assert all(r.distance_to_identity >= r_id - r.distance_to_rotation for r in rows)
    zero = conjugated_rotation_family(R, strengths=(0.0,))[0]
    assert zero.dilatation == pytest.approx(1.0, abs=1e-9) and zero.distance_to_rotation < 1e-12
