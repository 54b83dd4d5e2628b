import math

import numpy as np
import pytest

from burnside_lab.diffeo import Diffeomorphism, Rotation, Twist
from burnside_lab.errors import DensityError, TruncatedBallError, ValidationError
from burnside_lab.pesin import (
    MetricField,
    build_averaged_metric,
    dilatation_field,
    generator_dilatations,
    interpolate_metric,
    level_sums,
    lipschitz_check,
    lipschitz_checks,
    metric_sequence,
    qc_dilatation,
    round_field,
    tail_report,
    transport_matrices,
)
from burnside_lab.scenario import load_scenario
from burnside_lab.sphere import fibonacci_sphere, normalize, random_points
from burnside_lab.words import GeneratorSet, enumerate_ball

from conftest import commuting_twists, cyclic4, free_rotations, linked_twists, octahedral


def test_cyclic4_closed_form():
    c = 1 + 2 * math.exp(-0.5) + math.exp(-1.0)
    for N in (2, 3, 5):
        m = build_averaged_metric(cyclic4(), 0.5, N)
        assert np.abs(m.matrices - c * np.eye(2)).max() < 1e-10


def test_spd_and_monotone_truncation():
    for S in (commuting_twists(), linked_twists(), free_rotations()):
        seq = metric_sequence(S, 0.5, 4, samples=300)
        V = np.array([[1.0, 0.0], [0.0, 1.0], [0.6, 0.8], [0.6, -0.8]])
        prev = None
        for m in seq:
            assert np.linalg.eigvalsh(m)[:, 0].min() > 0
            q = np.einsum("di,pij,dj->pd", V, m, V)
            if prev is not None:
                assert np.all(q >= prev)
            prev = q


def test_isometry_equivariance_baseline():
    for N in (1, 3, 6):
        fld = build_averaged_metric(octahedral(), 0.5, N)
        assert all(abs(k - 1.0) < 1e-9 for k in generator_dilatations(octahedral(), fld).values())


def test_lipschitz_exact_forms_commuting_twists():
    for rep in lipschitz_checks(commuting_twists(), (0.2, 0.5, 1.0), 4, samples=500):
        assert rep.upper_violation < 1e-9
        assert rep.lower_reindexed_violation < 1e-9
        assert rep.reindexed_passed


def test_lipschitz_isometries_pass_with_slack():
    rep = lipschitz_check(octahedral(), 0.5, 3, samples=300)
    assert rep.passed and rep.reindexed_passed


def test_lipschitz_literal_lower_form_is_reported():
    # the same-index lower bound s*m_N >= e^-eps m_{N+1} is not a consequence of re-indexing
    rep = lipschitz_check(commuting_twists(), 0.5, 4, samples=500)
    assert rep.lower_violation > 1e-3 and not rep.passed


def test_lipschitz_refuses_asymmetric_sets():
    S = GeneratorSet.of(Rotation((0, 0, 1), 1.0), symmetric=False)
    with pytest.raises(ValidationError):
        lipschitz_check(S, 0.5, 2)


def test_epsilon_must_be_positive():
    with pytest.raises(ValidationError, match="epsilon must be positive"):
        level_sums(cyclic4(), -1.0, 2)


def test_tail_slope_commuting_twists():
    rep = tail_report(commuting_twists(), 0.5, 14)
    assert rep.slope <= -0.5 / 3 + 0.1
    assert rep.bound_holds
    assert abs(rep.slope - rep.predicted_slope) <= 0.1


def test_tail_slope_free_rotations_exact():
    rep = tail_report(free_rotations(), 1.2, 5, samples=200)
    # every g^*m is the round metric, so increments are |sphere n| e^{-eps n}
    assert rep.slope == pytest.approx(rep.predicted_slope, abs=1e-12)


def test_threads_do_not_change_results():
    S = linked_twists()
    pts = fibonacci_sphere(400)
    a = level_sums(S, 0.5, 4, pts, threads=1)
    b = level_sums(S, 0.5, 4, pts, threads=4)
    assert np.array_equal(a, b)


def test_truncated_ball_refused():
    S = free_rotations()
    ball = enumerate_ball(S, 4, cap=50)
    with pytest.raises(TruncatedBallError):
        level_sums(S, 0.5, 4, ball=ball)


def test_transport_is_identity_for_equal_points(rng):
    pts = random_points(rng, 5)
    M = np.array([[[2.0, 0.3], [0.3, 1.0]]] * 5)
    assert np.allclose(transport_matrices(pts, M, pts), M)


def test_interpolation_of_round_metric(rng):
    fld = round_field(500)
    out = interpolate_metric(fld, random_points(rng, 20))
    assert np.allclose(out, np.eye(2), atol=1e-12)


def test_density_error():
    # a dense cap near the north pole says nothing about the south pole
    pts = fibonacci_sphere(2000)
    pts = pts[pts[:, 2] > 0.5]
    fld = MetricField(0.5, 1, pts, np.broadcast_to(np.eye(2), (len(pts), 2, 2)).copy())
    interpolate_metric(fld, np.array([[0.0, 0.0, 1.0]]))
    with pytest.raises(DensityError, match="sample count"):
        interpolate_metric(fld, np.array([[0.0, 0.0, -1.0]]))


def test_qc_against_round_field_matches_closed_form():
    f = Diffeomorphism.of(Twist((0, 0, 1), 2.0))
    assert qc_dilatation(f) == pytest.approx(3 + 2 * math.sqrt(2), abs=1e-5)
    # the sampled (unrefined) field version is bounded by the exact sup
    assert dilatation_field(f, round_field()).max() <= 3 + 2 * math.sqrt(2) + 1e-9


def test_averaged_metric_tames_commuting_twists():
    S = commuting_twists()
    eps = 0.5
    fld = build_averaged_metric(S, eps, 10)
    dil = generator_dilatations(S, fld)
    assert max(dil.values()) <= math.exp(2 * eps)
    assert max(dil.values()) < qc_dilatation(S.word(((1, 1),)))


def test_doubling_samples_barely_moves_dilatation():
    S = commuting_twists()
    a = generator_dilatations(S, build_averaged_metric(S, 0.5, 6, samples=2000))
    b = generator_dilatations(S, build_averaged_metric(S, 0.5, 6, samples=4000))
    assert max(abs(a[k] - b[k]) for k in a) < 1e-3


def test_interpolation_error_is_second_order(rng):
    # quadrupling the samples halves the spacing; a quadratic fit should cut the error about 4x
    y = random_points(rng, 200)
    for S, N in ((linked_twists(), 3), (commuting_twists(), 6)):
        exact = level_sums(S, 0.5, N, y).sum(axis=0)
        errs = []
        for n in (2000, 8000):
            got = interpolate_metric(build_averaged_metric(S, 0.5, N, samples=n), y)
            errs.append(float((np.abs(got - exact).max(axis=(1, 2)) / np.abs(exact).max(axis=(1, 2))).max()))
        assert errs[1] < errs[0] / 3


SHIPPED_TAILS = [(name, eps) for name in ("so3-baseline", "cyclic4", "commuting-twists", "free-rotations",
                                          "linked-twists")
                 for eps in load_scenario(name).epsilon]


@pytest.mark.parametrize("name,eps", SHIPPED_TAILS)
def test_tail_slope_matches_count_times_weight(name, eps):
    s = load_scenario(name)
    rep = tail_report(s.generator_set(), eps, s.option("pesin_radius"), samples=s.samples)
    if rep.predicted_slope is None:
        # finite group: both series stop once n passes the diameter
        assert rep.slope is None and all(i == 0 for i in rep.increments[-2:])
    else:
        assert abs(rep.slope - rep.predicted_slope) <= 0.1
