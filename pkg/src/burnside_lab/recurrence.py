"""Near-recurrence of a point triple under a word ball, fixed points of the recurrence
element, element orders, orbit hulls and conjugated-rotation experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import sphere
from .cocycle import FixedPointRecord, classify_periodic_point
from .diffeo import (
    Diffeomorphism,
    Rotation,
    Twist,
    apply_letters,
    c0_distance,
    evaluate,
    evaluate_words,
    inverse,
    operator_norm_D,
    standard_samples,
)
from .errors import FixedPointNotFound, PreconditionError, ValidationError
from .jet import Jet
from .pesin import qc_dilatation
from .sphere import _geodesic, as_points
from .words import FINGERPRINT_CELL, WordBall

TRIPLE_MIN_SEPARATION = 0.1
PIGEONHOLE_CONSTANT = 2.0 * math.pi
NEWTON_MAX_ITER = 50
NEWTON_TOL = 1e-10
NEWTON_DAMPING = 0.5
NEWTON_POLISH_STEPS = 3
NEWTON_SINGULAR_COND = 1e12
ORDER_TOL = 1e-8
HULL_SEGMENT_POINTS = 64
DEFAULT_TRIPLE = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
DEFAULT_STRENGTHS = (1.6, 0.8, 0.4, 0.2, 0.1)


@dataclass(frozen=True)
class TripleConfig:
    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray

    def __post_init__(self):
        pts = [as_points(p) for p in (self.x1, self.x2, self.x3)]
        for i in range(3):
            for j in range(i + 1, 3):
                if _geodesic(pts[i], pts[j]) < TRIPLE_MIN_SEPARATION:
                    raise ValidationError(f"triple points {i} and {j} are closer than {TRIPLE_MIN_SEPARATION}")
        for name, p in zip(("x1", "x2", "x3"), pts):
            object.__setattr__(self, name, p)

    @classmethod
    def default(cls) -> "TripleConfig":
        return cls(*(np.array(p) for p in DEFAULT_TRIPLE))

    def array(self) -> np.ndarray:
        return np.stack([self.x1, self.x2, self.x3])


def pair_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Sup-product geodesic distance between triples a, b of shape (..., 3, 3).

    Written with explicit component arithmetic so the value of a pair does not depend
    on how the arrays were batched.
    """
    cx = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    cy = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    cz = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    dot = a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]
    ang = np.arctan2(np.sqrt(cx * cx + cy * cy + cz * cz), dot)
    return np.maximum(np.maximum(ang[..., 0], ang[..., 1]), ang[..., 2])


def pigeonhole_bound(count: int, c: float = PIGEONHOLE_CONSTANT) -> float:
    """c |B|^(-1/6): some pair of |B| points in (S^2)^3 (sup metric) is at most this close.

    Balls of radius r in the sup metric contain (4 r^2 / pi)^3 of volume, the total
    volume is (4 pi)^3, so disjoint balls of radius d/2 force d <= 2 pi |B|^(-1/6).
    """
    return c * count ** (-1.0 / 6.0)


@dataclass(frozen=True)
class RecurrencePair:
    g: tuple
    h: tuple
    g_index: int
    h_index: int
    triple_distance: float
    f: Diffeomorphism
    displacement: tuple
    bound: float
    degenerate: bool = False


def triple_images(ball: WordBall, triple: TripleConfig) -> np.ndarray:
    return evaluate_words(ball.generators.table, ball.words, triple.array())


def nearest_pair(images: np.ndarray) -> tuple[int, int, float]:
    """Closest pair of triples (sup geodesic metric), ties to the lexicographically first (i, j).

    A Euclidean k-d tree on R^9 supplies a first upper bound d0; every pair within
    sup-geodesic distance d0 has R^9 chord length <= sqrt(3) d0, so one radius query
    returns a candidate set that contains every minimizing pair.
    """
    W = len(images)
    if W < 2:
        raise ValidationError("need at least two elements")
    flat = images.reshape(W, 9)
    tree = cKDTree(flat)
    _, nn = tree.query(flat, k=2)
    nb = nn[:, 1]
    d_nn = pair_distance(images, images[nb])
    d0 = float(d_nn.min())
    r = math.sqrt(3.0) * d0 * (1.0 + 1e-9) + 1e-15
    cand = tree.query_pairs(r, output_type="ndarray")
    if len(cand) == 0:
        i = int(np.argmin(d_nn))
        cand = np.array([[min(i, nb[i]), max(i, nb[i])]])
    cand = np.sort(cand, axis=1)
    d = pair_distance(images[cand[:, 0]], images[cand[:, 1]])
    order = np.lexsort((cand[:, 1], cand[:, 0], d))
    i, j = cand[order[0]]
    return int(i), int(j), float(d[order[0]])


def pigeonhole_pair(ball: WordBall, triple: TripleConfig | None = None) -> RecurrencePair:
    triple = triple or TripleConfig.default()
    if len(ball) < 2:
        raise ValidationError("pigeonhole_pair needs a ball with at least two elements")
    imgs = triple_images(ball, triple)
    i, j, d = nearest_pair(imgs)
    S = ball.generators
    g, h = ball.words[i], ball.words[j]
    f = compose_inverse_left(S.word(h), S.word(g))
    pts = triple.array()
    disp = tuple(float(x) for x in _geodesic(evaluate(f, pts), pts))
    degenerate = float(np.abs(imgs - imgs[0]).max()) < FINGERPRINT_CELL
    return RecurrencePair(g, h, i, j, d, f, disp, pigeonhole_bound(len(ball)), degenerate)


def compose_inverse_left(h: Diffeomorphism, g: Diffeomorphism) -> Diffeomorphism:
    """h^-1 o g."""
    inv = inverse(h)
    return Diffeomorphism(g.table, inv.letters + g.letters)


# -- fixed points ---------------------------------------------------------------------


def _displacement(f: Diffeomorphism, u: np.ndarray, chart: str, with_jacobian: bool):
    if with_jacobian:
        U = Jet.variable(np.array([u[0]]), 0, second_order=False)
        V = Jet.variable(np.array([u[1]]), 1, second_order=False)
    else:
        U, V = np.array([u[0]]), np.array([u[1]])
    x, y, z = sphere.lift_arrays(U, V, chart)
    x, y, z = apply_letters(f._prims, f.letters, x, y, z)
    den = (1.0 - z) if chart == sphere.NORTH else (1.0 + z)
    pu, pv = x / den, y / den
    if not with_jacobian:
        return np.array([pu[0] - u[0], pv[0] - u[1]]), None
    D = np.array([pu.val[0] - u[0], pv.val[0] - u[1]])
    J = np.array([pu.d[0], pv.d[0]]) - np.eye(2)
    return D, J


def _point(u, chart):
    x, y, z = sphere.lift_arrays(u[0], u[1], chart)
    return sphere.normalize(np.array([x, y, z]))


def _residual(f, p):
    return float(_geodesic(evaluate(f, p), p))


def _pattern_search(f, u0, chart, step, max_evals=20000):
    u = np.array(u0, dtype=float)
    best = _residual(f, _point(u, chart))
    dirs = np.array([[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1], [-1, -1], [1, -1], [-1, 1]], float)
    dirs[4:] /= math.sqrt(2.0)
    evals = 0
    while step > 1e-15 and best >= NEWTON_TOL and evals < max_evals:
        improved = False
        for d in dirs:
            cand = u + step * d
            r = _residual(f, _point(cand, chart))
            evals += 1
            if r < best:
                u, best, improved = cand, r, True
                break
        if not improved:
            step *= 0.5
    return u, best


def find_fixed_point(f: Diffeomorphism, seed_point, search_radius: float, descriptor: str = "") -> FixedPointRecord:
    """Damped Newton on x -> chart(f(x)) - chart(x) in the chart containing the seed.

    Raises FixedPointNotFound when no fixed point within 2 * search_radius of the seed
    is reached to residual 1e-10 in 50 iterations (or by the pattern-search fallback).
    """
    seed = as_points(seed_point)
    r0 = _residual(f, seed)
    if r0 >= search_radius:
        raise PreconditionError(f"seed displacement {r0:.3e} is not below the search radius {search_radius}",
                                residual=r0)
    chart = sphere.chart_for(seed)
    u = np.array(sphere.project_arrays(seed, chart), dtype=float)
    p = seed
    res = r0
    best_u, best_res = u.copy(), res
    fallback = False
    it = 0
    polish = 0
    while it < NEWTON_MAX_ITER and (res >= NEWTON_TOL or polish < NEWTON_POLISH_STEPS) and res > 0.0:
        if res < NEWTON_TOL:
            polish += 1
        it += 1
        D, J = _displacement(f, u, chart, True)
        if not np.all(np.isfinite(J)) or np.linalg.cond(J) > NEWTON_SINGULAR_COND:
            fallback = True
            break
        step = -np.linalg.solve(J, D)
        lam = 1.0
        for _ in range(60):
            cand = u + lam * step
            r = _residual(f, _point(cand, chart))
            if r < res:
                break
            lam *= NEWTON_DAMPING
        else:
            if res < NEWTON_TOL:
                break
            fallback = True
            break
        u, res = cand, r
        if res < best_res:
            best_u, best_res = u.copy(), res
    if fallback and best_res >= NEWTON_TOL:
        u, res = _pattern_search(f, best_u, chart, max(search_radius / 4.0, 1e-6))
        if res < best_res:
            best_u, best_res = u, res
    p = _point(best_u, chart)
    if best_res >= NEWTON_TOL or _geodesic(p, seed) > 2.0 * search_radius:
        raise FixedPointNotFound(
            f"no fixed point within {2 * search_radius:.3g} of the seed (best residual {best_res:.3e})",
            best_res, p)
    rec = classify_periodic_point(f, p, descriptor)
    return FixedPointRecord(rec.point, best_res, rec.eigenvalues, rec.classification, rec.word,
                            "converged", fallback, it)


# -- orders and hulls -----------------------------------------------------------------


def element_order(f: Diffeomorphism, k_max: int, tol: float = ORDER_TOL):
    """Smallest k <= k_max with c0_distance(f^k, Id) < tol, or None (infinite / not found)."""
    if k_max < 1:
        raise ValidationError("k_max must be >= 1")
    base = standard_samples()
    cur = base
    for k in range(1, k_max + 1):
        cur = evaluate(f, cur)
        if float(_geodesic(cur, base).max()) < tol:
            return k
    return None


@dataclass(frozen=True)
class OrbitHull:
    word: str
    base: np.ndarray
    order: int
    diameter: float
    displacement: float
    dnorm: float
    bound: float
    segments: int

    @property
    def ratio(self) -> float:
        return self.diameter / self.bound if self.bound > 0 else 0.0


def _diameter(pts: np.ndarray, chunk: int = 2048) -> float:
    best = 0.0
    for lo in range(0, len(pts), chunk):
        a = pts[lo:lo + chunk]
        d = np.arctan2(np.linalg.norm(np.cross(a[:, None, :], pts[None, :, :]), axis=-1), a @ pts.T)
        best = max(best, float(d.max()))
    return best


def orbit_hull_diameter(f: Diffeomorphism, x, k: int, dnorm: float | None = None) -> OrbitHull:
    """Diameter of the union of f^j(segment from x to f(x)), j = 1..k.

    The union is a chain of k arcs of length at most ||D f||^j d(f(x), x), which gives
    the reported bound k ||D f||^(k+1) d(f(x), x).
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    x = as_points(x)
    fx = evaluate(f, x)
    disp = float(_geodesic(fx, x))
    seg = sphere.slerp(x, fx, HULL_SEGMENT_POINTS)
    pieces = []
    cur = seg
    for _ in range(k):
        cur = sphere.normalize(evaluate(f, cur))
        pieces.append(cur)
    pts = np.concatenate(pieces)
    if dnorm is None:
        dnorm = operator_norm_D(f)
    bound = k * dnorm ** (k + 1) * disp
    return OrbitHull(_describe(f), x, k, _diameter(pts), disp, float(dnorm), bound, k)


def _describe(f):
    return "*".join(f"{i}{'' if e == 1 else '^-1'}" for i, e in f.letters) or "Id"


# -- conjugated rotations -------------------------------------------------------------


@dataclass(frozen=True)
class ConjugateRow:
    strength: float
    dilatation: float
    distance_to_rotation: float
    distance_to_identity: float
    order: int | None


def conjugated_rotation_family(R: Rotation, strengths=DEFAULT_STRENGTHS, axis=(1.0, 0.0, 0.0),
                               k_max: int = 64) -> list:
    """s_t = g_t^-1 R g_t with g_t = Twist(axis, t), one row per strength."""
    ident = Diffeomorphism.identity()
    rot = Diffeomorphism.of(R)
    rows = []
    for t in strengths:
        if t < 0:
            raise ValidationError("strengths must be non-negative")
        g = Twist(axis, t)
        s = Diffeomorphism.of(g.inverse(), R, g)
        rows.append(ConjugateRow(float(t), qc_dilatation(s), c0_distance(s, rot), c0_distance(s, ident),
                                 element_order(s, k_max)))
    return rows
