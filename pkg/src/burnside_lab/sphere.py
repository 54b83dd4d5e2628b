"""Geometry of the round unit sphere: points, tangent frames, stereographic charts.

Most functions accept either a single point (shape ``(3,)``) or a stack of points
(shape ``(N, 3)``) and are vectorized over the leading axis.  The dataclasses at the
top are the validated, immutable single-point API.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ChartDomainError, ValidationError

UNIT_TOL = 1e-12
ORTHO_TOL = 1e-12
POLE_FALLBACK_TOL = 1e-9
CHART_MIN_POLE_DISTANCE = 1e-6
CHART_SWITCH_Z = 0.9

NORTH = "north"
SOUTH = "south"

_FALLBACK_NORTH = (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
_FALLBACK_SOUTH = (np.array([1.0, 0.0, 0.0]), np.array([0.0, -1.0, 0.0]))


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpherePoint:
    coords: np.ndarray

    def __post_init__(self):
        c = _readonly(self.coords)
        if c.shape != (3,):
            raise ValidationError(f"SpherePoint needs 3 coordinates, got shape {c.shape}")
        if abs(np.linalg.norm(c) - 1.0) > UNIT_TOL:
            raise ValidationError(f"SpherePoint not unit: |x| = {np.linalg.norm(c)!r}")
        object.__setattr__(self, "coords", c)

    @classmethod
    def normalized(cls, coords) -> "SpherePoint":
        c = np.asarray(coords, dtype=float)
        return cls(c / np.linalg.norm(c))

    def __array__(self, dtype=None, copy=None):
        return np.array(self.coords, dtype=dtype)

    def __iter__(self):
        return iter(self.coords)


@dataclass(frozen=True)
class TangentVector:
    base: SpherePoint
    dir: np.ndarray

    def __post_init__(self):
        d = _readonly(self.dir)
        if d.shape != (3,):
            raise ValidationError("tangent direction needs 3 components")
        if abs(float(d @ self.base.coords)) > ORTHO_TOL * max(1.0, np.linalg.norm(d)):
            raise ValidationError("tangent direction is not orthogonal to its base point")
        object.__setattr__(self, "dir", d)

    def in_frame(self) -> np.ndarray:
        """Components of the vector in ``frame_at(base)``."""
        fr = frame_at(self.base)
        return np.array([fr.e1 @ self.dir, fr.e2 @ self.dir])


@dataclass(frozen=True)
class Frame:
    base: SpherePoint
    e1: np.ndarray
    e2: np.ndarray

    def matrix(self) -> np.ndarray:
        """3x2 matrix whose columns are e1, e2."""
        return np.column_stack([self.e1, self.e2])


@dataclass(frozen=True)
class ChartCoords:
    chart: str
    u: float
    v: float

    def __post_init__(self):
        if self.chart not in (NORTH, SOUTH):
            raise ValidationError(f"unknown chart {self.chart!r}")


def as_points(p) -> np.ndarray:
    """Coerce a SpherePoint / array-like to a float array, checking unit norm."""
    a = np.asarray(p, dtype=float)
    if a.shape[-1] != 3:
        raise ValidationError(f"points need 3 coordinates, got shape {a.shape}")
    err = np.abs(np.linalg.norm(a, axis=-1) - 1.0)
    if np.any(err > UNIT_TOL):
        raise ValidationError(f"point(s) not on the unit sphere (max |1 - |x|| = {err.max():.3e})")
    return a


def normalize(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a / np.linalg.norm(a, axis=-1, keepdims=True)


def geodesic_distance(p, q):
    """Great-circle distance in radians.

    Computed as atan2(|p x q|, p . q), which agrees with the clamped arccos of the
    dot product but stays accurate for nearly equal or nearly antipodal points.
    """
    p = as_points(p)
    q = as_points(q)
    return _geodesic(p, q)


def _geodesic(p, q):
    cross = np.linalg.norm(np.cross(p, q), axis=-1)
    dot = np.sum(p * q, axis=-1)
    return np.arctan2(cross, dot)


def frame_arrays(p) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized frame field: e1 = eastward (longitude), e2 = p x e1 (northward).

    Within POLE_FALLBACK_TOL of a pole e1 is (1,0,0) made tangent, which gives
    e1=(1,0,0), e2=(0,1,0) at the north pole and e1=(1,0,0), e2=(0,-1,0) at the
    south pole. Both keep e1 x e2 = p (outward orientation).
    """
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    rho = np.hypot(p[:, 0], p[:, 1])
    near_pole = rho < POLE_FALLBACK_TOL
    safe = np.where(near_pole, 1.0, rho)
    e1 = np.stack([-p[:, 1] / safe, p[:, 0] / safe, np.zeros(len(p))], axis=1)
    e2 = np.cross(p, e1)
    if np.any(near_pole):
        # fallback e1 projected onto the tangent plane; at the poles exactly this is
        # (1,0,0) with e2 = (0,+-1,0)
        q = p[near_pole]
        f1 = _FALLBACK_NORTH[0] - q[:, :1] * q
        f1 /= np.linalg.norm(f1, axis=1, keepdims=True)
        e1[near_pole] = f1
        e2[near_pole] = np.cross(q, f1)
    if single:
        return e1[0], e2[0]
    return e1, e2


def frame_at(p) -> Frame:
    point = p if isinstance(p, SpherePoint) else SpherePoint(p)
    e1, e2 = frame_arrays(point.coords)
    return Frame(point, _readonly(e1), _readonly(e2))


def chart_for(p) -> str:
    """Chart switch rule: north chart (projection from (0,0,1)) when z <= 0.9."""
    return NORTH if float(np.asarray(p, dtype=float)[2]) <= CHART_SWITCH_Z else SOUTH


def project_arrays(p, chart: str):
    """Stereographic coordinates (u, v) of points p in the given chart (no validation)."""
    p = np.asarray(p, dtype=float)
    if chart == NORTH:
        den = 1.0 - p[..., 2]
    elif chart == SOUTH:
        den = 1.0 + p[..., 2]
    else:
        raise ValidationError(f"unknown chart {chart!r}")
    return p[..., 0] / den, p[..., 1] / den


def lift_arrays(u, v, chart: str):
    """Inverse of project_arrays; works on floats, arrays or jets."""
    r2 = u * u + v * v
    den = 1.0 + r2
    if chart == NORTH:
        return 2.0 * u / den, 2.0 * v / den, (r2 - 1.0) / den
    if chart == SOUTH:
        return 2.0 * u / den, 2.0 * v / den, (1.0 - r2) / den
    raise ValidationError(f"unknown chart {chart!r}")


def stereographic_project(p, chart: str | None = None) -> ChartCoords:
    pt = as_points(p)
    if chart is None:
        chart = chart_for(pt)
    pole = np.array([0.0, 0.0, 1.0 if chart == NORTH else -1.0])
    if _geodesic(pt, pole) < CHART_MIN_POLE_DISTANCE:
        raise ChartDomainError(f"point {pt.tolist()} is at the excluded pole of the {chart} chart")
    u, v = project_arrays(pt, chart)
    return ChartCoords(chart, float(u), float(v))


def stereographic_lift(c: ChartCoords) -> SpherePoint:
    x, y, z = lift_arrays(c.u, c.v, c.chart)
    return SpherePoint.normalized([x, y, z])


def chart_transition(u, v):
    """North <-> south chart change on the overlap: (u, v) -> (u, v) / (u^2 + v^2)."""
    r2 = u * u + v * v
    return u / r2, v / r2


def fibonacci_sphere(n: int) -> np.ndarray:
    """Deterministic quasi-uniform points; z_i = 1 - (2i+1)/n, golden-angle longitudes."""
    i = np.arange(n, dtype=float)
    z = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    theta = i * np.pi * (3.0 - np.sqrt(5.0))
    pts = np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def mean_spacing(n: int) -> float:
    """Typical nearest-neighbour spacing of an n-point Fibonacci set."""
    return float(np.sqrt(4.0 * np.pi / n))


def random_points(rng: np.random.Generator, n: int) -> np.ndarray:
    return normalize(rng.normal(size=(n, 3)))


def random_tangents(rng: np.random.Generator, pts: np.ndarray) -> np.ndarray:
    """Random tangent vectors (not normalized) at each of ``pts``."""
    g = rng.normal(size=pts.shape)
    return g - np.sum(g * pts, axis=-1, keepdims=True) * pts


def slerp(p, q, n: int) -> np.ndarray:
    """n points along the minimizing great-circle arc from p to q (inclusive)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    theta = float(_geodesic(p, q))
    t = np.linspace(0.0, 1.0, n)
    if theta < 1e-15:
        return np.repeat(p[None, :], n, axis=0)
    s = np.sin(theta)
    return (np.sin((1 - t) * theta)[:, None] * p + np.sin(t * theta)[:, None] * q) / s


def rotation_matrix(axis, angle: float) -> np.ndarray:
    """Right-handed rotation about a unit axis (Rodrigues)."""
    k = np.asarray(axis, dtype=float)
    kx = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(angle) * kx + (1.0 - np.cos(angle)) * (kx @ kx)


def minimal_rotation(p, q) -> np.ndarray:
    """Rotation taking unit vector p to unit vector q about the axis p x q."""
    c = np.cross(p, q)
    s = np.linalg.norm(c)
    if s < 1e-15:
        return np.eye(3)
    return rotation_matrix(c / s, float(np.arctan2(s, np.dot(p, q))))
