"""Derivative cocycle over the shift: psi, Birkhoff sums, Lyapunov exponents,
empirical orbit measures and classification of periodic points."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .diffeo import Diffeomorphism, evaluate, jacobian, jacobian_field
from .errors import PreconditionError, ValidationError
from .sphere import _geodesic, as_points, frame_arrays, normalize
from .words import GeneratorSet

HYPERBOLIC_TOL = 1e-4
FIXED_TOL = 1e-8
DOUBLE_EIG_TOL = 1e-12
SUM_TOL = 1e-8


@dataclass
class SymbolicWord:
    """A one-sided letter sequence: periodic repetition of ``core`` or i.i.d. uniform letters."""

    alphabet: tuple
    mode: str = "periodic"
    core: tuple = ()
    seed: int = 0
    _cache: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        if self.mode not in ("periodic", "random"):
            raise ValidationError(f"unknown word mode {self.mode!r}")
        if self.mode == "periodic" and not self.core:
            raise ValidationError("periodic words need a non-empty core")
        self.core = tuple(tuple(l) for l in self.core)

    @classmethod
    def periodic(cls, core: Sequence) -> "SymbolicWord":
        core = tuple(tuple(l) for l in core)
        return cls(tuple(sorted(set(core))), "periodic", core)

    @classmethod
    def random(cls, S: GeneratorSet, seed: int = 0) -> "SymbolicWord":
        return cls(S.alphabet, "random", (), seed)

    def letters(self, n: int) -> list:
        if self.mode == "periodic":
            k = len(self.core)
            return [self.core[i % k] for i in range(n)]
        if len(self._cache) < n:
            rng = np.random.default_rng(self.seed)
            idx = rng.integers(0, len(self.alphabet), size=max(n, 2 * len(self._cache)))
            self._cache = [self.alphabet[j] for j in idx]
        return self._cache[:n]

    def letter_at(self, i: int):
        if self.mode == "periodic":
            return self.core[i % len(self.core)]
        return self.letters(i + 1)[i]

    def descriptor(self) -> str:
        if self.mode == "periodic":
            return "periodic:" + ",".join(f"{i}{'+' if e == 1 else '-'}" for i, e in self.core)
        return f"random:seed={self.seed}"


def orbit_word(S: GeneratorSet, seq: Sequence) -> Diffeomorphism:
    """w_n = s_{n-1} o ... o s_0 for the letter sequence s_0, s_1, ..."""
    return S.word(tuple(reversed(list(seq))))


def _frame_coords(x, v):
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if v.shape == (2,):
        return v
    e1, e2 = frame_arrays(x)
    return np.array([e1 @ v, e2 @ v])


def _letter_step(S: GeneratorSet, letter, x):
    q, J, _ = jacobian_field(S.word((letter,)), x[None, :])
    return q[0], J[0]


def psi(S: GeneratorSet, letter, x, v) -> float:
    """log of the stretch of v under the letter's derivative at x (scale invariant)."""
    x = as_points(x)
    vf = _frame_coords(x, v)
    nv = np.linalg.norm(vf)
    if nv == 0.0:
        raise ValidationError("psi is undefined for the zero vector")
    _, J = _letter_step(S, letter, x)
    u = vf / nv
    return float(np.log(np.linalg.norm(J @ u)))


@dataclass(frozen=True)
class BirkhoffResult:
    stepwise: float
    direct: float
    n: int

    @property
    def defect(self) -> float:
        return abs(self.stepwise - self.direct)


def birkhoff_derivative_sum(S: GeneratorSet, w: SymbolicWord, x, v, n: int) -> BirkhoffResult:
    """(1/n) sum of psi along the orbit, and (1/n) log(|D_x w_n v| / |v|) from one Jacobian."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    x0 = as_points(x)
    v0 = _frame_coords(x0, v)
    if np.linalg.norm(v0) == 0.0:
        raise ValidationError("zero tangent vector")
    seq = w.letters(n)
    pos = x0
    u = v0 / np.linalg.norm(v0)
    total = 0.0
    for letter in seq:
        pos, J = _letter_step(S, letter, pos)
        u = J @ u
        nu = np.linalg.norm(u)
        total += math.log(nu)
        u = u / nu
    Jn = jacobian(orbit_word(S, seq), x0)
    direct = math.log(np.linalg.norm(Jn @ v0) / np.linalg.norm(v0)) / n
    return BirkhoffResult(total / n, direct, n)


@dataclass(frozen=True)
class LyapunovReport:
    lambda1: float
    lambda2: float
    steps: int
    word: str
    log_det_mean: float = 0.0

    @property
    def pair_sum(self) -> float:
        return self.lambda1 + self.lambda2


def lyapunov_pair(S: GeneratorSet, w: SymbolicWord, x, n: int, seed: int = 0, v=None) -> LyapunovReport:
    """Top exponent by renormalized vector iteration; the other from the log-det sum."""
    if n < 100:
        raise ValidationError("lyapunov_pair needs n >= 100")
    pos = as_points(x)
    if v is None:
        rng = np.random.default_rng(seed)
        u = rng.normal(size=2)
    else:
        u = _frame_coords(pos, v)
    u = u / np.linalg.norm(u)
    log_growth = 0.0
    log_det = 0.0
    for i in range(n):
        pos, J = _letter_step(S, w.letter_at(i), pos)
        u = J @ u
        nu = np.linalg.norm(u)
        log_growth += math.log(nu)
        log_det += math.log(abs(np.linalg.det(J)))
        u = u / nu
    l1 = log_growth / n
    l2 = log_det / n - l1
    l1, l2 = max(l1, l2), min(l1, l2)
    return LyapunovReport(l1, l2, n, w.descriptor(), log_det / n)


@dataclass(frozen=True)
class EmpiricalMeasure:
    """mu_n = (1/n) sum_{i<n} delta at the i-th orbit state (shift index i, point x_i)."""

    indices: tuple
    points: np.ndarray
    letters: tuple
    weights: np.ndarray

    def integrate(self, phi: Callable) -> float:
        return float(sum(wt * phi(l, p) for wt, l, p in zip(self.weights, self.letters, self.points)))


def orbit(S: GeneratorSet, w: SymbolicWord, x, n: int) -> np.ndarray:
    """Points x_0 .. x_n of the fibre orbit."""
    pos = as_points(x)
    out = [pos]
    for letter in w.letters(n):
        pos = normalize(evaluate(S.word((letter,)), pos))
        out.append(pos)
    return np.array(out)


def empirical_measure(S, w, x, n, shift: int = 0) -> EmpiricalMeasure:
    pts = orbit(S, w, x, n + shift)
    idx = tuple(range(shift, n + shift))
    letters = tuple(w.letter_at(i) for i in idx)
    return EmpiricalMeasure(idx, pts[shift:n + shift], letters, np.full(n, 1.0 / n))


def empirical_invariance_defect(S: GeneratorSet, w: SymbolicWord, x, n: int,
                                test_functions: Sequence[Callable]) -> float:
    """max_phi |int phi d(F_* mu_n) - int phi d mu_n|.

    Test functions take (current letter, point) and should be bounded by 1; the
    push-forward of mu_n is the empirical measure of the orbit shifted by one step.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    mu = empirical_measure(S, w, x, n)
    pushed = empirical_measure(S, w, x, n, shift=1)
    return max(abs(pushed.integrate(phi) - mu.integrate(phi)) for phi in test_functions)


@dataclass(frozen=True)
class FixedPointRecord:
    point: np.ndarray
    residual: float
    eigenvalues: tuple
    classification: str
    word: str
    status: str = "converged"
    fallback: bool = False
    iterations: int = 0

    def to_json(self) -> dict:
        return {
            "point": [float(c) for c in self.point],
            "residual": float(self.residual),
            "eigenvalues": [[float(np.real(z)), float(np.imag(z))] for z in self.eigenvalues],
            "classification": self.classification,
            "word": self.word,
            "status": self.status,
            "fallback": self.fallback,
            "iterations": self.iterations,
        }


def classify_matrix(J, tol: float = HYPERBOLIC_TOL) -> tuple[tuple, str]:
    """Eigenvalues and elliptic / parabolic / hyperbolic tag of a 2x2 fixed-point Jacobian.

    A double eigenvalue on the circle is elliptic when J is +-I (a rotation by 0 or pi)
    and parabolic when J carries a Jordan block.
    """
    J = np.asarray(J, dtype=float)
    ev = np.linalg.eigvals(J)
    ev = tuple(sorted((complex(z) for z in ev), key=lambda z: (-abs(z), -z.imag)))
    mods = np.abs(ev)
    if np.all(np.abs(mods - 1.0) > tol):
        return ev, "hyperbolic"
    tr = float(np.trace(J))
    det = float(np.linalg.det(J))
    disc = tr * tr - 4.0 * det
    scale = max(1.0, tr * tr)
    if abs(disc) <= DOUBLE_EIG_TOL * scale:
        lam = tr / 2.0
        if np.abs(J - lam * np.eye(2)).max() <= tol * max(1.0, np.abs(J).max()):
            return ev, "elliptic"
        return ev, "parabolic"
    if disc < 0 and np.all(np.abs(mods - 1.0) <= tol):
        return ev, "elliptic"
    return ev, "parabolic"


def classify_periodic_point(f: Diffeomorphism, p, descriptor: str = "", tol: float = HYPERBOLIC_TOL,
                            fixed_tol: float = FIXED_TOL) -> FixedPointRecord:
    """Eigenvalues and type of the period map f at a fixed point p."""
    p = as_points(p)
    residual = float(_geodesic(evaluate(f, p), p))
    if residual > fixed_tol:
        raise PreconditionError(f"point is not fixed (residual {residual:.3e})", residual=residual)
    ev, cls = classify_matrix(jacobian(f, p), tol)
    return FixedPointRecord(p, residual, ev, cls, descriptor or _describe(f))


def _describe(f: Diffeomorphism) -> str:
    return "*".join(f"{i}{'' if e == 1 else '^-1'}" for i, e in f.letters) or "Id"
