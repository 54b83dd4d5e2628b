"""Exponentially weighted averaged metrics over word balls and dilatation against them.

The truncated metric is  m_N = sum_{g in B_N} exp(-eps |g|) g^*m  with m the round
metric; at a point x its matrix in frame_at(x) is sum w_g J_g(x)^T J_g(x).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .diffeo import Diffeomorphism, jacobian_field, jacobian_words, refine_max, singular_values
from .errors import DensityError, TruncatedBallError, ValidationError
from .sphere import fibonacci_sphere, frame_arrays, mean_spacing
from .words import GeneratorSet, WordBall, enumerate_ball

FIELD_SAMPLES = 2000
INTERP_NEIGHBOURS = 3
FIT_NEIGHBOURS = 12
INTERP_RADIUS_FACTOR = 3.0
LIPSCHITZ_DIRECTIONS = 16
LIPSCHITZ_TOL = 1e-9
EPSILON_GRID = (1.6, 0.8, 0.4, 0.2, 0.1)
CHUNK_WORDS = 64


@dataclass(frozen=True)
class MetricField:
    epsilon: float
    N: int
    points: np.ndarray
    matrices: np.ndarray  # (P, 2, 2) in frame_at(points)
    provenance: str = ""

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrices)[:, 0].min())

    def interpolate(self, y: np.ndarray) -> np.ndarray:
        return interpolate_metric(self, y)


def round_field(samples: int = FIELD_SAMPLES) -> MetricField:
    pts = fibonacci_sphere(samples)
    return MetricField(0.0, 0, pts, np.broadcast_to(np.eye(2), (samples, 2, 2)).copy(), "round")


def _ball(S: GeneratorSet, N: int, ball: WordBall | None) -> WordBall:
    if ball is None or ball.radius < N:
        ball = enumerate_ball(S, N)
    elif ball.radius > N:
        ball = ball.restrict(N)
    if ball.truncated:
        raise TruncatedBallError(f"ball of radius {N} hit the element cap ({len(ball)} elements); "
                                 "the averaged metric needs the complete ball")
    return ball


def _gram_chunk(table, words, points):
    _, J, _ = jacobian_words(table, words, points)
    return np.einsum("wpki,wpkj->wpij", J, J)


def level_grams(S: GeneratorSet, N: int, points=None, ball=None, threads: int = 1,
                right_letter=None, with_max: bool = False):
    """Unweighted per-length sums sum_{|g| = k} (g s)^*m, shape (N+1, P, 2, 2).

    ``right_letter`` = s composes every element with a letter on the right (the
    pull-back s^* of the field); None means no letter.  Chunks are fixed and reduced
    in ball order, so the result does not depend on ``threads``.  With ``with_max``
    the per-length maximum of the largest eigenvalue of a single term is returned too.
    """
    ball = _ball(S, N, ball)
    pts = fibonacci_sphere(FIELD_SAMPLES) if points is None else np.asarray(points, dtype=float)
    words = ball.words if right_letter is None else [w + (right_letter,) for w in ball.words]
    lengths = ball.lengths
    chunks = [(lo, min(lo + CHUNK_WORDS, len(words))) for lo in range(0, len(words), CHUNK_WORDS)]

    def work(bounds):
        lo, hi = bounds
        return _gram_chunk(S.table, words[lo:hi], pts)

    out = np.zeros((N + 1, len(pts), 2, 2))
    tops = np.zeros(N + 1)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            _reduce(out, tops, ex.map(work, chunks), chunks, lengths)
    else:
        _reduce(out, tops, map(work, chunks), chunks, lengths)
    return (out, tops) if with_max else out


def _top_eig(G):
    a, b, c = G[..., 0, 0], G[..., 0, 1], G[..., 1, 1]
    return 0.5 * (a + c) + np.sqrt(0.25 * (a - c) ** 2 + b * b)


def _reduce(out, tops, grams, chunks, lengths):
    for (lo, hi), G in zip(chunks, grams):
        top = _top_eig(G).max(axis=1)
        for j in range(hi - lo):
            k = int(lengths[lo + j])
            out[k] += G[j]
            tops[k] = max(tops[k], float(top[j]))


def weigh_levels(grams: np.ndarray, epsilon: float, weight_sign: int = -1) -> np.ndarray:
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    w = np.exp(weight_sign * epsilon * np.arange(len(grams)))
    return grams * w[:, None, None, None]


def level_sums(S: GeneratorSet, epsilon: float, N: int, points=None, ball=None, threads: int = 1,
               weight_sign: int = -1, right_letter=None, grams=None) -> np.ndarray:
    """Per-length sums sum_{|g| = k} exp(sign eps k) (g s)^*m, shape (N+1, P, 2, 2)."""
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    if grams is None:
        grams = level_grams(S, N, points, ball, threads, right_letter)
    return weigh_levels(grams[:N + 1], epsilon, weight_sign)


def build_averaged_metric(S: GeneratorSet, epsilon: float, N: int, samples: int = FIELD_SAMPLES,
                          ball: WordBall | None = None, threads: int = 1, grams=None) -> MetricField:
    pts = fibonacci_sphere(samples)
    lv = level_sums(S, epsilon, N, pts, ball, threads, grams=grams)
    return MetricField(float(epsilon), int(N), pts, lv.sum(axis=0), ",".join(S.names))


def metric_sequence(S: GeneratorSet, epsilon: float, N_max: int, samples: int = FIELD_SAMPLES,
                    ball=None, threads: int = 1) -> list:
    """[m_0, m_1, ..., m_{N_max}] as (P, 2, 2) arrays (cumulative level sums)."""
    pts = fibonacci_sphere(samples)
    lv = level_sums(S, epsilon, N_max, pts, ball, threads)
    return list(np.cumsum(lv, axis=0))


@dataclass(frozen=True)
class TailReport:
    epsilon: float
    increments: tuple  # ||m_n - m_{n-1}|| sup over samples, n = 1..N_max
    slope: float | None
    predicted_increments: tuple
    predicted_slope: float | None
    threshold: float

    @property
    def bound_holds(self) -> bool:
        return self.slope is None or self.slope <= self.threshold


def _fit_top_half(values):
    n = len(values)
    ks = np.arange(1, n + 1)
    lo = (n - 1) // 2
    ks, vals = ks[lo:], np.asarray(values[lo:], dtype=float)
    good = vals > 0
    if good.sum() < 2:
        return None
    return float(np.polyfit(ks[good], np.log(vals[good]), 1)[0])


def tail_report(S: GeneratorSet, epsilon: float, N_max: int, samples: int = FIELD_SAMPLES, ball=None,
                threads: int = 1, grams=None, gram_max=None) -> TailReport:
    """Sup-norm increments of the truncated series and their fitted log-slope.

    The prediction is count(sphere n) * exp(-eps n) * max_{|g|=n} ||g^*m||, the
    term-mass bound used to show the series is Cauchy.  ``grams`` and ``gram_max``
    may be passed in to share work across several epsilons.
    """
    ball = _ball(S, N_max, ball)
    pts = fibonacci_sphere(samples)
    if grams is None or gram_max is None:
        grams, gram_max = level_grams(S, N_max, pts, ball, threads, with_max=True)
    lv = level_sums(S, epsilon, N_max, pts, ball, threads, grams=grams)
    inc = [float(np.linalg.eigvalsh(lv[n])[:, 1].max()) for n in range(1, N_max + 1)]
    pred = [len(ball.sphere(n)) * math.exp(-epsilon * n) * float(gram_max[n]) for n in range(1, N_max + 1)]
    return TailReport(float(epsilon), tuple(inc), _fit_top_half(inc), tuple(pred), _fit_top_half(pred),
                      -epsilon / 3.0 + 0.1)


@dataclass(frozen=True)
class LipschitzReport:
    epsilon: float
    N: int
    upper_violation: float  # s^*m_N <= e^eps m_{N+1}
    lower_violation: float  # s^*m_N >= e^-eps m_{N+1}
    lower_reindexed_violation: float  # s^*m_{N+1} >= e^-eps m_N
    weight_sign: int = -1
    tol: float = LIPSCHITZ_TOL

    @property
    def passed(self) -> bool:
        return max(self.upper_violation, self.lower_violation) <= self.tol

    @property
    def reindexed_passed(self) -> bool:
        return max(self.upper_violation, self.lower_reindexed_violation) <= self.tol


def _directions(k: int) -> np.ndarray:
    a = np.pi * np.arange(k) / k
    return np.stack([np.cos(a), np.sin(a)], axis=1)


def _quad(M, V):
    """Quadratic forms v^T M v for every sample (M: (P,2,2)) and direction (V: (D,2))."""
    return np.einsum("di,pij,dj->pd", V, M, V)


def _rel_violation(small, big):
    """max over entries of relative excess of ``small`` above ``big``."""
    return float(np.max(np.maximum(0.0, small - big) / big))


def lipschitz_checks(S: GeneratorSet, epsilons, N: int, samples: int = FIELD_SAMPLES,
                     weight_signs=(-1,), threads: int = 1, ball=None) -> list:
    """Finite-sum bi-Lipschitz inequalities of every letter against the truncated metric.

    One report per (epsilon, weight sign); the unweighted level sums are shared.
    """
    if not S.symmetric:
        raise ValidationError("lipschitz_check needs a symmetric generator set (inverses in S)")
    if N < 1:
        raise ValidationError("N must be >= 1")
    for eps in epsilons:
        if eps <= 0:
            raise ValidationError("epsilon must be positive")
    pts = fibonacci_sphere(samples)
    ball = _ball(S, N + 1, ball)
    V = _directions(LIPSCHITZ_DIRECTIONS)
    base = level_grams(S, N + 1, pts, ball, threads)
    shifted = [level_grams(S, N + 1, pts, ball, threads, letter) for letter in S.alphabet]
    out = []
    for eps in epsilons:
        e = math.exp(eps)
        for sign in weight_signs:
            lv = weigh_levels(base, eps, sign)
            mN1 = _quad(lv.sum(axis=0), V)
            mN = _quad(lv[:N + 1].sum(axis=0), V)
            up = lo = lo_re = 0.0
            for sg in shifted:
                slv = weigh_levels(sg, eps, sign)
                sN = _quad(slv[:N + 1].sum(axis=0), V)
                sN1 = _quad(slv.sum(axis=0), V)
                up = max(up, _rel_violation(sN, e * mN1))
                lo = max(lo, _rel_violation(mN1 / e, sN))
                lo_re = max(lo_re, _rel_violation(mN / e, sN1))
            out.append(LipschitzReport(float(eps), int(N), up, lo, lo_re, sign))
    return out


def lipschitz_check(S: GeneratorSet, epsilon: float, N: int, samples: int = FIELD_SAMPLES,
                    weight_sign: int = -1, threads: int = 1, ball=None) -> LipschitzReport:
    return lipschitz_checks(S, (epsilon,), N, samples, (weight_sign,), threads, ball)[0]


# -- dilatation ---------------------------------------------------------------------


def _rotate_batch(k, angle, v):
    c, s = np.cos(angle)[:, None], np.sin(angle)[:, None]
    return v * c + np.cross(k, v) * s + k * np.sum(k * v, axis=1, keepdims=True) * (1.0 - c)


def transport_matrices(src, M, dst):
    """Carry metric matrices at src (in frame_at(src)) to dst along the minimal rotation."""
    e1, e2 = frame_arrays(src)
    f1, f2 = frame_arrays(dst)
    cr = np.cross(src, dst)
    sn = np.linalg.norm(cr, axis=1)
    ang = np.arctan2(sn, np.sum(src * dst, axis=1))
    k = cr / np.where(sn > 0, sn, 1.0)[:, None]
    r1 = _rotate_batch(k, ang, e1)
    r2 = _rotate_batch(k, ang, e2)
    T = np.empty((len(src), 2, 2))
    T[:, 0, 0] = np.sum(f1 * r1, axis=1)
    T[:, 0, 1] = np.sum(f1 * r2, axis=1)
    T[:, 1, 0] = np.sum(f2 * r1, axis=1)
    T[:, 1, 1] = np.sum(f2 * r2, axis=1)
    return T @ M @ np.swapaxes(T, 1, 2)


_TREES: dict = {}


def _tree(points: np.ndarray) -> cKDTree:
    key = (len(points), points.tobytes()[:64], float(points.sum()))
    t = _TREES.get(key)
    if t is None:
        t = cKDTree(points)
        _TREES.clear()
        _TREES[key] = t
    return t


def _idw(field: MetricField, y, dist, idx, radius) -> np.ndarray:
    dist, idx = dist[:, :INTERP_NEIGHBOURS], idx[:, :INTERP_NEIGHBOURS]
    w = 1.0 / np.maximum(dist, 1e-300)
    w = np.where(dist <= radius, w, 0.0)
    w = w / w.sum(axis=1, keepdims=True)
    out = np.zeros((len(y), 2, 2))
    for j in range(INTERP_NEIGHBOURS):
        out += w[:, j, None, None] * transport_matrices(field.points[idx[:, j]], field.matrices[idx[:, j]], y)
    return out


def _quadratic_fit(field: MetricField, y, dist, idx) -> np.ndarray:
    # least-squares quadratic in tangent coordinates at y; the constant term is the estimate
    k = idx.shape[1]
    src = field.points[idx]
    M = np.stack([transport_matrices(src[:, j], field.matrices[idx[:, j]], y) for j in range(k)], axis=1)
    e1, e2 = frame_arrays(y)
    h = np.maximum(dist[:, -1:], 1e-300)
    u = np.einsum("ykc,yc->yk", src - y[:, None], e1) / h
    v = np.einsum("ykc,yc->yk", src - y[:, None], e2) / h
    A = np.stack([np.ones_like(u), u, v, u * u, u * v, v * v], axis=-1)
    coef = np.linalg.solve(np.einsum("yki,ykj->yij", A, A),
                           np.einsum("yki,ykm->yim", A, M.reshape(len(y), k, 4)))
    out = coef[:, 0].reshape(len(y), 2, 2)
    return 0.5 * (out + np.swapaxes(out, 1, 2))


def interpolate_metric(field: MetricField, y: np.ndarray) -> np.ndarray:
    """Metric matrices at arbitrary points, in frame_at(y).

    Samples near y are carried to y along minimal rotations and fitted by a
    quadratic in tangent coordinates. Points sitting on a sample take it
    directly; a fit that is not positive definite falls back to inverse
    distance weighting of the 3 nearest samples.
    """
    y = np.atleast_2d(y)
    radius = INTERP_RADIUS_FACTOR * mean_spacing(len(field.points))
    k = min(FIT_NEIGHBOURS, len(field.points))
    dist, idx = _tree(field.points).query(y, k=k)
    dist, idx = dist.reshape(len(y), k), idx.reshape(len(y), k)
    if np.any(dist[:, 0] > radius):
        worst = float(dist[:, 0].max())
        raise DensityError(f"target point {worst:.3g} from the nearest field sample exceeds the "
                           f"interpolation radius {radius:.3g}; raise the sample count")
    if k >= FIT_NEIGHBOURS:
        out = _quadratic_fit(field, y, dist, idx)
        bad = np.linalg.eigvalsh(out)[:, 0] <= 0
    else:
        out = np.empty((len(y), 2, 2))
        bad = np.ones(len(y), bool)
    if bad.any():
        out[bad] = _idw(field, y[bad], dist[bad], idx[bad], radius)
    exact = dist[:, 0] < 1e-14
    if exact.any():
        out[exact] = transport_matrices(field.points[idx[exact, 0]], field.matrices[idx[exact, 0]], y[exact])
    return out


def _dilatation_round(f: Diffeomorphism, pts) -> np.ndarray:
    _, J, _ = jacobian_field(f, pts)
    sv = singular_values(J)
    return sv[:, 0] / sv[:, 1]


def qc_dilatation(f: Diffeomorphism, field: MetricField | None = None, samples: int = FIELD_SAMPLES,
                  refine: bool = True) -> float:
    """Max over samples of sigma_max / sigma_min of Df measured in the given metric field.

    ``field=None`` means the round metric; it is known everywhere, so the sampled
    maximum is refined by golden-section ascent.
    """
    if field is None:
        pts = fibonacci_sphere(samples)
        K = _dilatation_round(f, pts)
        best = float(K.max())
        if refine and f.letters:
            top = np.argsort(-K, kind="stable")[:5]
            best = max(best, refine_max(lambda p: _dilatation_round(f, p), pts[top], K[top],
                                        half_width=2.0 * mean_spacing(samples)))
        return best
    return float(dilatation_field(f, field).max())


def dilatation_field(f: Diffeomorphism, field: MetricField) -> np.ndarray:
    q, J, _ = jacobian_field(f, field.points)
    Cx = np.linalg.cholesky(field.matrices)
    Cy = np.linalg.cholesky(interpolate_metric(field, q))
    A = np.swapaxes(Cy, 1, 2) @ J @ np.linalg.inv(np.swapaxes(Cx, 1, 2))
    sv = singular_values(A)
    return sv[:, 0] / sv[:, 1]


def generator_dilatations(S: GeneratorSet, field: MetricField) -> dict:
    """Dilatation of each generator (and inverse letter) relative to the field."""
    return {S.letter_name(l): float(dilatation_field(S.word((l,)), field).max()) for l in S.alphabet}
