"""Closed-form diffeomorphisms of the sphere as words over primitive maps.

Primitive formulas are written component-wise so they evaluate identically on
float arrays and on :class:`~burnside_lab.jet.Jet` batches; Jacobians and second
derivatives come from propagating jets through the same code path.

Word convention: ``letters[0]`` is the outermost map, so a word (l0, l1, ..., lk)
acts as l0 o l1 o ... o lk and the rightmost letter is applied first.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import jet as jetlib
from .errors import UnsupportedOrderError, ValidationError
from .jet import Jet
from .sphere import _geodesic, as_points, fibonacci_sphere, frame_arrays, mean_spacing, normalize, rotation_matrix

UNIT_AXIS_TOL = 1e-12
MOBIUS_DET_TOL = 1e-12

NORM_BASE_POINTS = 200
NORM_DIRECTIONS = 16
NORM_REFINE_CANDIDATES = 5
NORM_GOLDEN_ITERATIONS = 20
NORM_SWEEPS = 2

C0_SAMPLES = 1001  # odd, so the equator z = 0 is a sample point


def _unit_axis(axis) -> tuple[float, float, float]:
    a = np.asarray(axis, dtype=float)
    if a.shape != (3,) or abs(np.linalg.norm(a) - 1.0) > UNIT_AXIS_TOL:
        raise ValidationError(f"axis must be a unit 3-vector, got {axis!r}")
    return (float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class Rotation:
    axis: tuple
    angle: float
    kind = "rotation"
    area_preserving = True

    def __post_init__(self):
        object.__setattr__(self, "axis", _unit_axis(self.axis))
        object.__setattr__(self, "angle", float(self.angle))

    def matrix(self) -> np.ndarray:
        return rotation_matrix(self.axis, self.angle)

    def apply(self, x, y, z):
        R = self.matrix()
        return (R[0, 0] * x + R[0, 1] * y + R[0, 2] * z,
                R[1, 0] * x + R[1, 1] * y + R[1, 2] * z,
                R[2, 0] * x + R[2, 1] * y + R[2, 2] * z)

    def inverse(self) -> "Rotation":
        return Rotation(self.axis, -self.angle)

    def to_record(self) -> dict:
        return {"kind": "rotation", "axis": list(self.axis), "angle": self.angle}


@dataclass(frozen=True)
class Twist:
    """(theta, h) -> (theta + strength * h, h) in cylindrical coordinates about ``axis``.

    Equivalently a rotation about ``axis`` by the angle strength * <axis, p>; it preserves
    d(theta) ^ dh, which is the round area form.
    """

    axis: tuple
    strength: float
    kind = "twist"
    area_preserving = True

    def __post_init__(self):
        object.__setattr__(self, "axis", _unit_axis(self.axis))
        object.__setattr__(self, "strength", float(self.strength))

    def apply(self, x, y, z):
        n0, n1, n2 = self.axis
        h = n0 * x + n1 * y + n2 * z
        phi = self.strength * h
        c, s = np.cos(phi), np.sin(phi)
        one_c = 1.0 - c
        cx, cy, cz = n1 * z - n2 * y, n2 * x - n0 * z, n0 * y - n1 * x
        return (x * c + cx * s + n0 * (h * one_c),
                y * c + cy * s + n1 * (h * one_c),
                z * c + cz * s + n2 * (h * one_c))

    def inverse(self) -> "Twist":
        return Twist(self.axis, -self.strength)

    def to_record(self) -> dict:
        return {"kind": "twist", "axis": list(self.axis), "strength": self.strength}


@dataclass(frozen=True)
class Mobius:
    """z -> (a z + b) / (c z + d) in the north-chart coordinate z = (x + iy) / (1 - h).

    Evaluated in homogeneous coordinates, so there is no excluded pole: a point is
    represented by (x + iy, 1 - h) in the southern hemisphere and by the proportional
    pair (1 + h, x - iy) in the northern one.
    """

    a: complex
    b: complex
    c: complex
    d: complex
    kind = "mobius"
    area_preserving = False

    def __post_init__(self):
        for k in "abcd":
            object.__setattr__(self, k, complex(getattr(self, k)))
        det = self.a * self.d - self.b * self.c
        if abs(det - 1.0) > MOBIUS_DET_TOL:
            raise ValidationError(f"Mobius determinant must be 1, got {det}")

    @classmethod
    def normalized(cls, a, b, c, d) -> "Mobius":
        det = complex(a) * complex(d) - complex(b) * complex(c)
        if det == 0:
            raise ValidationError("degenerate Mobius matrix")
        r = np.sqrt(det)
        return cls(a / r, b / r, c / r, d / r)

    def apply(self, x, y, z):
        south = jetlib.value(z) <= 0.0
        re1 = jetlib.where(south, x, 1.0 + z)
        im1 = jetlib.where(south, y, 0.0 * z)
        re2 = jetlib.where(south, 1.0 - z, x)
        im2 = jetlib.where(south, 0.0 * z, -1.0 * y)

        def cmul(k, re, im):
            return k.real * re - k.imag * im, k.real * im + k.imag * re

        ar, ai = cmul(self.a, re1, im1)
        br, bi = cmul(self.b, re2, im2)
        cr, ci = cmul(self.c, re1, im1)
        dr, di = cmul(self.d, re2, im2)
        w1r, w1i = ar + br, ai + bi
        w2r, w2i = cr + dr, ci + di
        n1 = w1r * w1r + w1i * w1i
        n2 = w2r * w2r + w2i * w2i
        den = n1 + n2
        # w1 * conj(w2)
        pr = w1r * w2r + w1i * w2i
        pi = w1i * w2r - w1r * w2i
        return 2.0 * pr / den, 2.0 * pi / den, (n1 - n2) / den

    def inverse(self) -> "Mobius":
        return Mobius(self.d, -self.b, -self.c, self.a)

    def to_record(self) -> dict:
        return {"kind": "mobius",
                **{k: [getattr(self, k).real, getattr(self, k).imag] for k in "abcd"}}


Primitive = Rotation | Twist | Mobius


@dataclass(frozen=True)
class Diffeomorphism:
    """A word over a table of primitives.

    ``letters`` holds (primitive index, exponent) pairs with exponent in {+1, -1}.
    Words are never simplified here.
    """

    table: tuple
    letters: tuple = ()
    _prims: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "table", tuple(self.table))
        letters = tuple((int(i), int(e)) for i, e in self.letters)
        for i, e in letters:
            if not 0 <= i < len(self.table) or e not in (1, -1):
                raise ValidationError(f"bad letter {(i, e)} for a table of {len(self.table)}")
        object.__setattr__(self, "letters", letters)
        object.__setattr__(self, "_prims", letter_primitives(self.table))

    @classmethod
    def identity(cls, table=()) -> "Diffeomorphism":
        return cls(tuple(table), ())

    @classmethod
    def of(cls, *prims) -> "Diffeomorphism":
        """Word p0 o p1 o ... over a fresh table (p_last applied first)."""
        return cls(tuple(prims), tuple((i, 1) for i in range(len(prims))))

    def __len__(self):
        return len(self.letters)

    def __matmul__(self, other):
        return compose(self, other)

    def power(self, k: int) -> "Diffeomorphism":
        if k < 0:
            return inverse(self).power(-k)
        return Diffeomorphism(self.table, self.letters * k)

    def area_preserving(self) -> bool:
        return all(self.table[i].area_preserving for i, _ in self.letters)


_PRIM_CACHE: dict = {}


def letter_primitives(table) -> dict:
    """Map (index, exponent) -> primitive (the inverse primitive for exponent -1)."""
    key = tuple(table)
    cached = _PRIM_CACHE.get(key)
    if cached is None:
        cached = {}
        for i, p in enumerate(key):
            cached[(i, 1)] = p
            cached[(i, -1)] = p.inverse()
        if len(_PRIM_CACHE) > 4096:
            _PRIM_CACHE.clear()
        _PRIM_CACHE[key] = cached
    return cached


def compose(f: Diffeomorphism, g: Diffeomorphism) -> Diffeomorphism:
    """f o g: the letter lists concatenate (g acts first)."""
    if f.table == g.table:
        return Diffeomorphism(f.table, f.letters + g.letters)
    if not g.letters:
        return f
    if not f.letters:
        return g
    off = len(f.table)
    return Diffeomorphism(f.table + g.table, f.letters + tuple((i + off, e) for i, e in g.letters))


def inverse(f: Diffeomorphism) -> Diffeomorphism:
    return Diffeomorphism(f.table, tuple((i, -e) for i, e in reversed(f.letters)))


# -- evaluation ---------------------------------------------------------------------


def apply_letters(prims: dict, letters: Sequence, x, y, z):
    for key in reversed(letters):
        x, y, z = prims[key].apply(x, y, z)
    return x, y, z


def evaluate(f: Diffeomorphism, p) -> np.ndarray:
    """Image of a point (3,) or points (N, 3) under f, by exact composition."""
    p = as_points(p)
    x, y, z = apply_letters(f._prims, f.letters, p[..., 0], p[..., 1], p[..., 2])
    return np.stack([x, y, z], axis=-1)


def evaluate_words(table, words: Sequence[Sequence], points: np.ndarray):
    """Evaluate many words of a common table on a shared point set.

    Returns an array of shape (len(words), len(points), 3).  Letters at equal depth
    are applied together in one vectorized call per distinct letter.
    """
    pts = np.asarray(points, dtype=float)
    W, P = len(words), len(pts)
    comps = [np.tile(pts[:, k], W) for k in range(3)]
    _apply_batched(letter_primitives(table), words, P, comps)
    return np.stack(comps, axis=-1).reshape(W, P, 3)


def _apply_batched(prims, words, P, comps):
    """In-place: comps[k] has W*P rows; row block w is driven by words[w]."""
    maxlen = max((len(w) for w in words), default=0)
    lengths = np.array([len(w) for w in words])
    for depth in range(maxlen):
        groups: dict = {}
        for wi, w in enumerate(words):
            if lengths[wi] > depth:
                groups.setdefault(w[len(w) - 1 - depth], []).append(wi)
        for key, wis in groups.items():
            rows = (np.asarray(wis)[:, None] * P + np.arange(P)[None, :]).ravel()
            sub = [c[rows] for c in comps]
            out = prims[key].apply(*sub)
            for c, o in zip(comps, out):
                c[rows] = o


def _chart_jets(points, second_order):
    """Jets for x(s, t) = normalize(p + s e1 + t e2) at s = t = 0, per point."""
    n = len(points)
    e1, e2 = frame_arrays(points)
    s = Jet.variable(np.zeros(n), 0, second_order)
    t = Jet.variable(np.zeros(n), 1, second_order)
    r = np.sqrt(1.0 + s * s + t * t)
    return [(points[:, k] + s * e1[:, k] + t * e2[:, k]) / r for k in range(3)]


def _frame_derivatives(out, second_order):
    q = np.stack([o.val for o in out], axis=-1)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    f1, f2 = frame_arrays(q)
    D = np.stack([o.d for o in out], axis=1)  # (n, 3, 2)
    J = np.stack([np.einsum("nk,nkj->nj", f1, D), np.einsum("nk,nkj->nj", f2, D)], axis=1)
    H = None
    if second_order:
        Hs = np.stack([o.h for o in out], axis=1)  # (n, 3, 2, 2)
        H = np.stack([np.einsum("nk,nkab->nab", f1, Hs), np.einsum("nk,nkab->nab", f2, Hs)], axis=1)
    return q, J, H


def jacobian_field(f: Diffeomorphism, points, second_order: bool = False):
    """Images, frame Jacobians (n, 2, 2) and optionally second derivatives (n, 2, 2, 2).

    J maps frame_at(p) coordinates to frame_at(f(p)) coordinates.  The second
    derivatives are those of the map in the tangent-plane charts
    (s, t) -> normalize(p + s e1 + t e2) at the source and orthogonal projection
    onto the target frame.
    """
    pts = np.atleast_2d(as_points(points))
    comps = _chart_jets(pts, second_order)
    out = apply_letters(f._prims, f.letters, *comps)
    out = [o if isinstance(o, Jet) else Jet.constant(o, comps[0]) for o in out]
    return _frame_derivatives(out, second_order)


def jacobian_words(table, words, points, second_order: bool = False):
    """Batched jacobian_field for many words: arrays shaped (W, P, ...)."""
    pts = np.atleast_2d(as_points(points))
    W, P = len(words), len(pts)
    base = _chart_jets(pts, second_order)
    comps = []
    for c in base:
        idx = np.tile(np.arange(P), W)
        comps.append(c[idx].copy())
    _apply_batched(letter_primitives(table), words, P, comps)
    q, J, H = _frame_derivatives(comps, second_order)
    q = q.reshape(W, P, 3)
    J = J.reshape(W, P, 2, 2)
    if H is not None:
        H = H.reshape(W, P, 2, 2, 2)
    return q, J, H


def jacobian(f: Diffeomorphism, p) -> np.ndarray:
    """2x2 Jacobian of f at a single point, frame_at(p) -> frame_at(f(p))."""
    _, J, _ = jacobian_field(f, np.asarray(p, dtype=float)[None, :])
    return J[0]


def second_derivative(f: Diffeomorphism, p) -> np.ndarray:
    _, _, H = jacobian_field(f, np.asarray(p, dtype=float)[None, :], second_order=True)
    return H[0]


def singular_values(J) -> np.ndarray:
    return np.linalg.svd(np.asarray(J), compute_uv=False)


def sigma_max(J) -> np.ndarray:
    return singular_values(J)[..., 0]


# -- norm estimation ----------------------------------------------------------------

_GOLD = (np.sqrt(5.0) - 1.0) / 2.0


def _golden_line(objective, centers, e1, e2, s0, t0, coord, half_width, iters):
    """Vectorized golden-section ascent along one chart coordinate per candidate."""
    def point(s, t):
        return normalize(centers + s[:, None] * e1 + t[:, None] * e2)

    def at(offset):
        if coord == 0:
            return point(s0 + offset, t0)
        return point(s0, t0 + offset)

    K = len(centers)
    a = np.full(K, -half_width)
    b = np.full(K, half_width)
    x1 = b - _GOLD * (b - a)
    x2 = a + _GOLD * (b - a)
    f1 = objective(at(x1))
    f2 = objective(at(x2))
    best_v = np.maximum(f1, f2)
    best_x = np.where(f1 >= f2, x1, x2)
    for _ in range(iters):
        left = f1 > f2
        # maximum in [a, x2] when f1 > f2, else in [x1, b]
        b = np.where(left, x2, b)
        a = np.where(left, a, x1)
        nx1 = np.where(left, b - _GOLD * (b - a), x2)
        nx2 = np.where(left, x1, a + _GOLD * (b - a))
        newx = np.where(left, nx1, nx2)
        fnew = objective(at(newx))
        f1, f2 = np.where(left, fnew, f2), np.where(left, f1, fnew)
        x1, x2 = nx1, nx2
        better = fnew > best_v
        best_v = np.where(better, fnew, best_v)
        best_x = np.where(better, newx, best_x)
    # keep the centre if nothing beat it
    f0 = objective(at(np.zeros(K)))
    keep = f0 >= best_v
    best_v = np.where(keep, f0, best_v)
    best_x = np.where(keep, 0.0, best_x)
    if coord == 0:
        return s0 + best_x, t0, best_v
    return s0, t0 + best_x, best_v


def refine_max(objective, centers, base_values, half_width=None, iters=NORM_GOLDEN_ITERATIONS,
               sweeps=NORM_SWEEPS) -> float:
    """Coordinate-wise golden-section ascent of a scalar field from candidate points."""
    centers = np.atleast_2d(centers)
    if half_width is None:
        half_width = 2.0 * mean_spacing(NORM_BASE_POINTS)
    e1, e2 = frame_arrays(centers)
    e1, e2 = np.atleast_2d(e1), np.atleast_2d(e2)
    K = len(centers)
    s = np.zeros(K)
    t = np.zeros(K)
    best = np.asarray(base_values, dtype=float).copy()
    hw = half_width
    for _ in range(sweeps):
        for coord in (0, 1):
            s, t, v = _golden_line(objective, centers, e1, e2, s, t, coord, hw, iters)
            best = np.maximum(best, v)
        hw = hw / 8.0
    return float(best.max())


def _field_values(J, H, quantity):
    if quantity == "d1":
        return sigma_max(J)
    return np.sqrt(np.sum(H * H, axis=(-3, -2, -1)))


def _sup_over_maps(maps, quantity, refine=True, base_points=NORM_BASE_POINTS):
    """Sup over the sphere and over ``maps`` (words on one table) of a derivative size.

    All maps are evaluated in one batched pass, both on the base grid and inside the
    golden-section refinement.
    """
    table = maps[0].table
    words = [g.letters for g in maps]
    second = quantity == "d2"
    pts = fibonacci_sphere(base_points)
    _, J, H = jacobian_words(table, words, pts, second)
    vals = _field_values(J, H, quantity)  # (maps, points)
    coarse = float(vals.max())
    if not refine:
        return coarse
    cands = []
    for mi in range(len(maps)):
        top = np.argsort(-vals[mi], kind="stable")[:NORM_REFINE_CANDIDATES]
        cands.extend((float(vals[mi, k]), mi, int(k)) for k in top)
    cands.sort(key=lambda c: (-c[0], c[1], c[2]))
    chosen = cands[:NORM_REFINE_CANDIDATES]
    which = np.array([c[1] for c in chosen])
    centers = pts[[c[2] for c in chosen]]
    cols = np.arange(len(chosen))

    def objective(p):
        _, Jp, Hp = jacobian_words(table, words, p, second)
        v = _field_values(Jp, Hp, quantity)
        return v[which, cols]

    return max(coarse, refine_max(objective, centers, [c[0] for c in chosen]))


def operator_norm_D(f: Diffeomorphism, refine: bool = True) -> float:
    """max(||Df||+, ||D(f^-1)||+): largest expansion of f or of its inverse.

    Sampled at 200 Fibonacci points (the direction sup is the exact top singular
    value), then the best 5 candidates are refined by golden-section ascent.
    """
    if not f.letters:
        return 1.0
    return _sup_over_maps((f, inverse(f)), "d1", refine=refine)


def cr_norm(f: Diffeomorphism, r: int, refine: bool = True) -> float:
    """Chart C^r size of f for r in {1, 2}; r = 2 adds the sup of the second derivative."""
    if r not in (1, 2):
        raise UnsupportedOrderError(f"C^r norms are implemented for r in {{1, 2}}, got {r!r}")
    return cr_norms(f, refine)[r - 1]


def cr_norms(f: Diffeomorphism, refine: bool = True) -> tuple[float, float]:
    """(C^1 size, C^2 size) sharing the first-derivative pass."""
    n1 = max(1.0, operator_norm_D(f, refine=refine))
    if not f.letters:
        return n1, n1
    return n1, max(n1, _sup_over_maps((f, inverse(f)), "d2", refine=refine))


_C0_POINTS = None


def standard_samples() -> np.ndarray:
    global _C0_POINTS
    if _C0_POINTS is None:
        _C0_POINTS = fibonacci_sphere(C0_SAMPLES)
        _C0_POINTS.setflags(write=False)
    return _C0_POINTS


def c0_distance(f: Diffeomorphism, g: Diffeomorphism, points=None) -> float:
    pts = standard_samples() if points is None else points
    return float(_geodesic(evaluate(f, pts), evaluate(g, pts)).max())
