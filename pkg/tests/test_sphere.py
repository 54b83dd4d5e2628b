import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from burnside_lab import sphere
from burnside_lab.errors import ChartDomainError, ValidationError
from burnside_lab.sphere import (
    ChartCoords,
    SpherePoint,
    TangentVector,
    chart_transition,
    fibonacci_sphere,
    frame_arrays,
    frame_at,
    geodesic_distance,
    minimal_rotation,
    normalize,
    slerp,
    stereographic_lift,
    stereographic_project,
)

coord = st.floats(-1.0, 1.0, allow_nan=False)


def unit(x, y, z):
    v = np.array([x, y, z])
    n = np.linalg.norm(v)
    return None if n < 1e-3 else v / n


points = st.tuples(coord, coord, coord).map(lambda t: unit(*t)).filter(lambda v: v is not None)


@given(points)
def test_frame_is_orthonormal_and_oriented(p):
    e1, e2 = frame_arrays(p)
    M = np.column_stack([e1, e2, p])
    assert np.allclose(M.T @ M, np.eye(3), atol=1e-12)
    assert np.allclose(np.cross(e1, e2), p, atol=1e-12)


@pytest.mark.parametrize("p", [(0.0, 1e-10, 1.0), (3e-10, -1e-10, -1.0), (1e-12, 0.0, 1.0)])
def test_frame_inside_fallback_zone_stays_orthonormal(p):
    p = normalize(np.array(p))
    e1, e2 = frame_arrays(p)
    M = np.column_stack([e1, e2, p])
    assert np.allclose(M.T @ M, np.eye(3), atol=1e-15)
    assert np.allclose(np.cross(e1, e2), p, atol=1e-15)


def test_pole_fallback_frames():
    fr = frame_at([0.0, 0.0, 1.0])
    assert np.array_equal(fr.e1, [1, 0, 0]) and np.array_equal(fr.e2, [0, 1, 0])
    fr = frame_at([0.0, 0.0, -1.0])
    assert np.array_equal(fr.e1, [1, 0, 0]) and np.array_equal(fr.e2, [0, -1, 0])


def test_equator_frame_is_east_north():
    fr = frame_at([1.0, 0.0, 0.0])
    assert np.allclose(fr.e1, [0, 1, 0]) and np.allclose(fr.e2, [0, 0, 1])


@given(points)
def test_stereographic_round_trip(p):
    c = stereographic_project(p)
    q = stereographic_lift(c).coords
    assert np.allclose(p, q, atol=1e-12)


def test_chart_rule():
    assert stereographic_project([0.0, 0.0, -1.0]).chart == "north"
    assert stereographic_project(normalize([0.1, 0.0, 1.0])).chart == "south"


def test_excluded_pole_raises():
    with pytest.raises(ChartDomainError):
        stereographic_project([0.0, 0.0, 1.0], "north")
    with pytest.raises(ChartDomainError):
        stereographic_project([0.0, 0.0, -1.0], "south")


@given(points)
def test_chart_transition(p):
    if abs(p[2]) > 0.99:
        return
    n = stereographic_project(p, "north")
    s = stereographic_project(p, "south")
    u, v = chart_transition(n.u, n.v)
    assert math.isclose(u, s.u, rel_tol=1e-9, abs_tol=1e-12)
    assert math.isclose(v, s.v, rel_tol=1e-9, abs_tol=1e-12)


def test_validation():
    with pytest.raises(ValidationError):
        SpherePoint([1.0, 1.0, 0.0])
    with pytest.raises(ValidationError):
        TangentVector(SpherePoint([1.0, 0.0, 0.0]), [1.0, 0.0, 0.0])
    with pytest.raises(ValidationError):
        ChartCoords("east", 0.0, 0.0)


def test_tangent_in_frame():
    t = TangentVector(SpherePoint([1.0, 0.0, 0.0]), [0.0, 2.0, -3.0])
    assert np.allclose(t.in_frame(), [2.0, -3.0])


@given(points, points)
def test_geodesic_symmetric_and_bounded(p, q):
    d = geodesic_distance(p, q)
    assert math.isclose(d, geodesic_distance(q, p), abs_tol=1e-15)
    assert 0.0 <= d <= math.pi + 1e-15


def test_geodesic_small_and_antipodal():
    p = np.array([1.0, 0.0, 0.0])
    q = normalize([1.0, 1e-9, 0.0])
    assert math.isclose(geodesic_distance(p, q), 1e-9, rel_tol=1e-6)
    assert math.isclose(geodesic_distance(p, -p), math.pi)


def test_fibonacci_points():
    pts = fibonacci_sphere(1001)
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0)
    assert np.any(np.abs(pts[:, 2]) < 1e-12)  # odd count puts one point on the equator
    assert abs(pts.mean(axis=0)).max() < 1e-2


@settings(max_examples=50)
@given(points, points)
def test_minimal_rotation_and_slerp(p, q):
    if np.dot(p, q) < -0.999:
        return
    R = minimal_rotation(p, q)
    assert np.allclose(R @ p, q, atol=1e-9)
    assert np.allclose(R.T @ R, np.eye(3), atol=1e-12)
    arc = slerp(p, q, 9)
    assert np.allclose(arc[0], p) and np.allclose(arc[-1], q, atol=1e-9)
    steps = sphere._geodesic(arc[1:], arc[:-1])
    assert np.allclose(steps, steps[0], atol=1e-9)
