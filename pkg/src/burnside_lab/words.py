"""Word balls, growth estimates and derivative growth over balls."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .diffeo import (
    Diffeomorphism,
    cr_norms,
    evaluate_words,
    jacobian_words,
    operator_norm_D,
    sigma_max,
)
from .errors import ValidationError
from .sphere import fibonacci_sphere

FINGERPRINT_PROBES = 24
FINGERPRINT_CELL = 1e-8
ELEMENT_CAP = 2_000_000
EXPONENTIAL_SLOPE = 0.1
SCREEN_POINTS = 200
REFINE_TOP_WORDS = 1


@dataclass(frozen=True)
class GeneratorSet:
    """Named primitives; when symmetric every letter comes with its inverse.

    Alphabet order (used for lexicographic tie-breaks) is p0, p0^-1, p1, p1^-1, ...
    """

    primitives: tuple
    names: tuple
    symmetric: bool = True

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))
        object.__setattr__(self, "names", tuple(self.names))
        if len(self.primitives) == 0:
            raise ValidationError("a generator set needs at least one primitive")
        if len(self.names) != len(self.primitives):
            raise ValidationError("one name per primitive")
        if len(set(self.names)) != len(self.names):
            raise ValidationError("generator names must be unique")

    @classmethod
    def of(cls, *prims, symmetric: bool = True, names=None) -> "GeneratorSet":
        names = names or tuple(f"s{i}" for i in range(len(prims)))
        return cls(tuple(prims), tuple(names), symmetric)

    @property
    def table(self) -> tuple:
        return self.primitives

    @property
    def alphabet(self) -> tuple:
        out = []
        for i in range(len(self.primitives)):
            out.append((i, 1))
            if self.symmetric:
                out.append((i, -1))
        return tuple(out)

    def word(self, letters: Sequence) -> Diffeomorphism:
        return Diffeomorphism(self.primitives, tuple(letters))

    def letter_name(self, letter) -> str:
        i, e = letter
        return self.names[i] if e == 1 else self.names[i] + "^-1"

    def describe(self, letters: Sequence) -> str:
        return "*".join(self.letter_name(l) for l in letters) if letters else "Id"


@dataclass
class WordBall:
    generators: GeneratorSet
    radius: int
    words: list  # shortest words, breadth-first / lexicographic discovery order
    lengths: np.ndarray
    fingerprints: list
    counts: list
    truncated: bool = False
    probe_images: np.ndarray = field(default=None, repr=False)

    @property
    def elements(self) -> dict:
        return dict(zip(self.fingerprints, self.words))

    def __len__(self):
        return len(self.words)

    def restrict(self, n: int) -> "WordBall":
        if n > self.radius:
            raise ValidationError(f"cannot restrict a radius-{self.radius} ball to radius {n}")
        k = self.counts[n]
        return WordBall(self.generators, n, self.words[:k], self.lengths[:k],
                        self.fingerprints[:k], self.counts[: n + 1], self.truncated and k == len(self.words),
                        None if self.probe_images is None else self.probe_images[:k])

    def diffeos(self):
        return [self.generators.word(w) for w in self.words]

    def sphere(self, k: int) -> list:
        """Indices of the elements of word length exactly k."""
        lo = self.counts[k - 1] if k > 0 else 0
        return list(range(lo, self.counts[k]))


_PROBES = fibonacci_sphere(FINGERPRINT_PROBES)


def fingerprint_images(images: np.ndarray, cell: float = FINGERPRINT_CELL) -> list:
    """One hashable key per element from its (probes, 3) image array."""
    q = np.rint(images / cell).astype(np.int64)
    return [row.tobytes() for row in q.reshape(len(q), -1)]


def fingerprint(f: Diffeomorphism, probes: int = FINGERPRINT_PROBES, cell: float = FINGERPRINT_CELL):
    pts = _PROBES if probes == FINGERPRINT_PROBES else fibonacci_sphere(probes)
    img = evaluate_words(f.table, [f.letters], pts)
    return fingerprint_images(img, cell)[0]


def enumerate_ball(S: GeneratorSet, n: int, cap: int = ELEMENT_CAP, probes: int = FINGERPRINT_PROBES,
                   cell: float = FINGERPRINT_CELL) -> WordBall:
    """Breadth-first closure under right multiplication by letters, with numerical dedup."""
    if n < 0:
        raise ValidationError("radius must be non-negative")
    pts = _PROBES if probes == FINGERPRINT_PROBES else fibonacci_sphere(probes)
    alphabet = S.alphabet
    words = [()]
    images = [pts[None, :, :].copy()]
    fps = fingerprint_images(images[0], cell)
    seen = set(fps)
    lengths = [0]
    counts = [1]
    frontier = [()]
    truncated = False
    for depth in range(1, n + 1):
        if truncated:
            break
        children = [w + (a,) for w in frontier for a in alphabet]
        new_words = []
        if children:
            img = evaluate_words(S.table, children, pts)
            keys = fingerprint_images(img, cell)
            keep = []
            for ci, key in enumerate(keys):
                if key in seen:
                    continue
                if len(words) + len(new_words) >= cap:
                    truncated = True
                    break
                seen.add(key)
                fps.append(key)
                new_words.append(children[ci])
                keep.append(ci)
            if keep:
                images.append(img[keep])
        words.extend(new_words)
        lengths.extend([depth] * len(new_words))
        counts.append(len(words))
        frontier = new_words
    while len(counts) < n + 1:
        counts.append(len(words))
    return WordBall(S, n, words, np.asarray(lengths), fps, counts, truncated,
                    np.concatenate(images, axis=0))


@dataclass(frozen=True)
class GrowthReport:
    counts: tuple
    exponent: float
    classification: str
    truncated: bool = False


def _top_half_slope(ks, ys) -> float:
    ks = np.asarray(ks, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(ks) < 2:
        return 0.0
    return float(np.polyfit(ks, ys, 1)[0])


def growth_exponent(ball: WordBall) -> GrowthReport:
    """Least-squares slope of log B_k over the upper half of the radii."""
    n = ball.radius
    if n < 4:
        raise ValidationError("growth_exponent needs radius >= 4")
    counts = tuple(ball.counts)
    if counts[n] == counts[n - 1] and not ball.truncated:
        return GrowthReport(counts, 0.0, "finite", False)
    ks = list(range(math.ceil(n / 2), n + 1))
    slope = max(0.0, _top_half_slope(ks, [math.log(counts[k]) for k in ks]))
    cls = "exponential" if slope > EXPONENTIAL_SLOPE else "subexponential"
    return GrowthReport(counts, slope, cls, ball.truncated)


def words_of_length(S: GeneratorSet, n: int, budget: int, seed: int = 0) -> list:
    """All length-n words when there are at most ``budget``, else a seeded uniform sample."""
    alphabet = S.alphabet
    if len(alphabet) ** n <= budget:
        return [tuple(w) for w in itertools.product(alphabet, repeat=n)]
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(alphabet), size=(budget, n))
    return [tuple(alphabet[j] for j in row) for row in idx]


def _screen_norms(S: GeneratorSet, words: list, points) -> np.ndarray:
    """Coarse ||D(w)||: max top singular value of w and w^-1 over sample points."""
    inv = [tuple((i, -e) for i, e in reversed(w)) for w in words]
    out = np.empty(len(words))
    step = max(1, 20000 // max(1, len(points)))
    for lo in range(0, len(words), step):
        chunk = words[lo:lo + step] + inv[lo:lo + step]
        _, J, _ = jacobian_words(S.table, chunk, points)
        s = sigma_max(J).max(axis=1)
        m = len(chunk) // 2
        out[lo:lo + m] = np.maximum(s[:m], s[m:])
    return out


def max_log_dnorm(S: GeneratorSet, n: int, sample_budget: int = 256, seed: int = 0) -> float:
    """max over length-n words of log ||D(w)||, screened coarsely and refined at the top."""
    if n == 0:
        return 0.0
    words = words_of_length(S, n, sample_budget, seed)
    coarse = _screen_norms(S, words, fibonacci_sphere(SCREEN_POINTS))
    order = np.argsort(-coarse, kind="stable")[:REFINE_TOP_WORDS]
    best = float(coarse.max())
    for k in order:
        best = max(best, operator_norm_D(S.word(words[k])))
    return math.log(best)


def derivative_growth_exponent(S: GeneratorSet, n: int, sample_budget: int = 256, seed: int = 0) -> float:
    """(1/n) max_{|w| = n} log ||D(w)||."""
    if n < 2:
        raise ValidationError("derivative_growth_exponent needs n >= 2")
    return max_log_dnorm(S, n, sample_budget, seed) / n


@dataclass(frozen=True)
class CrGrowthReport:
    lengths: tuple
    max_c1: tuple
    max_c2: tuple
    rate_c1: float
    rate_c2: float
    bound_holds: bool
    slack: float = 0.05


def cr_growth_report(S: GeneratorSet, n: int, r: int = 2, sample_budget: int = 64, seed: int = 0,
                     slack: float = 0.05) -> CrGrowthReport:
    """Per-length max ||w||_1 and ||w||_2 with fitted exponential rates.

    The check is rate(||.||_r) <= r * rate(||.||_1) + slack.
    """
    if r != 2:
        raise ValidationError("cr_growth_report supports r = 2 only")
    pts = fibonacci_sphere(SCREEN_POINTS)
    lengths, c1, c2 = [], [], []
    for k in range(1, n + 1):
        words = words_of_length(S, k, sample_budget, seed + k)
        coarse = _screen_norms(S, words, pts)
        top = np.argsort(-coarse, kind="stable")[:REFINE_TOP_WORDS]
        lengths.append(k)
        norms = [cr_norms(S.word(words[j])) for j in top]
        c1.append(max(v[0] for v in norms))
        c2.append(max(v[1] for v in norms))
    ks = lengths[(len(lengths) - 1) // 2:]
    rate1 = max(0.0, _top_half_slope(ks, [math.log(v) for v in c1[(len(lengths) - 1) // 2:]]))
    rate2 = max(0.0, _top_half_slope(ks, [math.log(v) for v in c2[(len(lengths) - 1) // 2:]]))
    return CrGrowthReport(tuple(lengths), tuple(c1), tuple(c2), rate1, rate2,
                          rate2 <= r * rate1 + slack, slack)
