"""Scenario files and the experiment pipeline behind the ``burnside-lab`` command."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .cocycle import (
    SymbolicWord,
    birkhoff_derivative_sum,
    empirical_invariance_defect,
    lyapunov_pair,
    orbit_word,
)
from .diffeo import Diffeomorphism, Mobius, Rotation, Twist, c0_distance, jacobian, operator_norm_D
from .errors import (
    DensityError,
    FixedPointNotFound,
    PreconditionError,
    TruncatedBallError,
    ValidationError,
)
from .pesin import (
    FIELD_SAMPLES,
    MetricField,
    build_averaged_metric,
    generator_dilatations,
    level_grams,
    lipschitz_checks,
    qc_dilatation,
    tail_report,
)
from .recurrence import (
    DEFAULT_STRENGTHS,
    TripleConfig,
    conjugated_rotation_family,
    element_order,
    find_fixed_point,
    orbit_hull_diameter,
    pigeonhole_pair,
)
from .sphere import fibonacci_sphere, normalize
from .words import (
    ELEMENT_CAP,
    GeneratorSet,
    WordBall,
    cr_growth_report,
    enumerate_ball,
    growth_exponent,
    max_log_dnorm,
)

EXPERIMENTS = ("growth", "derivs", "crgrowth", "lyapunov", "pesin", "qc", "recur", "order", "conjfamily")
TOP_KEYS = ("name", "generators", "symmetric", "epsilon", "max_radius", "samples", "seed", "experiments",
            "output_format", "options")
REQUIRED_KEYS = ("name", "generators", "experiments")
GENERATOR_KEYS = {
    "rotation": ("name", "kind", "axis", "angle"),
    "twist": ("name", "kind", "axis", "strength"),
    "mobius": ("name", "kind", "a", "b", "c", "d"),
}
U64_MAX = 2 ** 64 - 1
RIPPLE = 1.05

# option name -> (kind, default); a default of None is resolved from the other fields
OPTIONS = {
    "element_cap": ("int", ELEMENT_CAP),
    "derivs_radius": ("int", None),
    "derivs_budget": ("int", 256),
    "crgrowth_radius": ("int", None),
    "crgrowth_budget": ("int", 64),
    "lyapunov_word": ("str", "random"),
    "lyapunov_steps": ("int", 1000),
    "lyapunov_start": ("point", (0.2672612419124244, 0.5345224838248488, 0.8017837257372732)),
    "fixed_point_seed": ("point", None),
    "pesin_radius": ("int", None),
    "lipschitz_radius": ("int", None),
    "recur_radius": ("int", None),
    "triple": ("triple", None),
    "kmax": ("int", 64),
    "fixed_point_radius": ("float", 0.5),
    "hull_k": ("int", 6),
    "order_radius": ("int", 2),
    "conj_rotation": ("rotation", {"axis": [0.0, 0.0, 1.0], "angle": 2.0 * math.pi / 5.0}),
    "conj_axis": ("point", (1.0, 0.0, 0.0)),
    "conj_strengths": ("floats", DEFAULT_STRENGTHS),
}


@dataclass(frozen=True)
class Scenario:
    name: str
    generators: tuple  # canonical primitive records, each with a "name"
    symmetric: bool = True
    epsilon: tuple = (0.5,)
    max_radius: int = 6
    samples: int = FIELD_SAMPLES
    seed: int = 0
    experiments: tuple = ("growth",)
    output_format: str = "json"
    options: dict = field(default_factory=dict)

    def generator_set(self) -> GeneratorSet:
        prims = tuple(primitive_from_record(g) for g in self.generators)
        return GeneratorSet(prims, tuple(g["name"] for g in self.generators), self.symmetric)

    def option(self, key: str):
        if key in self.options:
            return self.options[key]
        default = OPTIONS[key][1]
        if default is not None:
            return default
        if key == "pesin_radius":
            return min(self.max_radius, 6)
        if key == "crgrowth_radius":
            return max(2, min(self.max_radius, 5))
        if key == "lipschitz_radius":
            return max(1, min(self.option("pesin_radius"), 4))
        if key in ("recur_radius", "derivs_radius"):
            return self.max_radius
        if key == "fixed_point_seed":
            return self.option("lyapunov_start")
        return None

    def with_overrides(self, **kw) -> "Scenario":
        opts = dict(self.options)
        fields = {}
        for k, v in kw.items():
            if v is None:
                continue
            if k in OPTIONS:
                opts[k] = _check_option(k, v, f"options.{k}")
            else:
                fields[k] = v
        d = {**self.__dict__, **fields, "options": opts}
        return Scenario(**d)

    def echo(self) -> dict:
        return {
            "name": self.name,
            "generators": [dict(g) for g in self.generators],
            "symmetric": self.symmetric,
            "epsilon": list(self.epsilon),
            "max_radius": self.max_radius,
            "samples": self.samples,
            "seed": self.seed,
            "experiments": list(self.experiments),
            "output_format": self.output_format,
            "options": {k: _plain(v) for k, v in sorted(self.options.items())},
        }


# -- parsing ----------------------------------------------------------------------------


def _no_duplicate_keys(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ValidationError(f"duplicate key {k!r}")
        out[k] = v
    return out


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a JSON scenario.

    Syntax errors report line and column; validation errors name the field path.
    """
    try:
        raw = json.loads(text, object_pairs_hook=_no_duplicate_keys)
    except json.JSONDecodeError as e:
        raise ValidationError(f"parse error at line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(raw, dict):
        raise ValidationError("scenario must be a JSON object")
    for k in raw:
        if k not in TOP_KEYS:
            raise ValidationError(f"unknown key {k!r}")
    for k in REQUIRED_KEYS:
        if k not in raw:
            raise ValidationError(f"{k}: required field missing")

    name = raw["name"]
    if not isinstance(name, str) or not name:
        raise ValidationError("name: must be a non-empty string")
    gens = _parse_generators(raw["generators"])
    symmetric = raw.get("symmetric", True)
    if not isinstance(symmetric, bool):
        raise ValidationError("symmetric: must be true or false")

    eps = raw.get("epsilon", 0.5)
    eps_list = eps if isinstance(eps, list) else [eps]
    if not eps_list:
        raise ValidationError("epsilon: list must not be empty")
    for i, e in enumerate(eps_list):
        path = "epsilon" if not isinstance(eps, list) else f"epsilon[{i}]"
        if not _is_number(e):
            raise ValidationError(f"{path}: must be a number")
        if not e > 0 or not math.isfinite(e):
            raise ValidationError(f"{path}: epsilon must be positive")

    max_radius = _int_field(raw, "max_radius", 6, lo=0)
    samples = _int_field(raw, "samples", FIELD_SAMPLES, lo=100)
    seed = _int_field(raw, "seed", 0, lo=0, hi=U64_MAX)

    exps = raw["experiments"]
    if not isinstance(exps, list) or not exps:
        raise ValidationError("experiments: must be a non-empty list")
    for i, e in enumerate(exps):
        if e not in EXPERIMENTS:
            raise ValidationError(f"experiments[{i}]: unknown experiment {e!r}")
    if len(set(exps)) != len(exps):
        raise ValidationError("experiments: duplicate entries")
    exps = tuple(e for e in EXPERIMENTS if e in exps)

    fmt = raw.get("output_format", "json")
    if fmt not in ("csv", "json"):
        raise ValidationError("output_format: must be 'csv' or 'json'")

    opts = raw.get("options", {})
    if not isinstance(opts, dict):
        raise ValidationError("options: must be an object")
    options = {}
    for k, v in opts.items():
        if k not in OPTIONS:
            raise ValidationError(f"unknown key 'options.{k}'")
        options[k] = _check_option(k, v, f"options.{k}")

    return Scenario(name, gens, symmetric, tuple(float(e) for e in eps_list), max_radius, samples, seed,
                    exps, fmt, options)


def load_scenario(path) -> Scenario:
    """Read a scenario from a path, or from the shipped set when given a bare name."""
    p = Path(path)
    if not p.exists():
        shipped = shipped_scenarios()
        key = p.name[:-5] if p.name.endswith(".json") else p.name
        if key in shipped and p.parent == Path("."):
            return parse_scenario(shipped[key])
        raise ValidationError(f"scenario file not found: {path}")
    return parse_scenario(p.read_text())


def shipped_scenarios() -> dict:
    root = resources.files("burnside_lab") / "scenarios"
    return {f.name[:-5]: f.read_text() for f in sorted(root.iterdir(), key=lambda f: f.name)
            if f.name.endswith(".json")}


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _int_field(raw, key, default, lo=None, hi=None):
    v = raw.get(key, default)
    if not isinstance(v, int) or isinstance(v, bool):
        raise ValidationError(f"{key}: must be an integer")
    if lo is not None and v < lo:
        raise ValidationError(f"{key}: must be >= {lo}")
    if hi is not None and v > hi:
        raise ValidationError(f"{key}: must be <= {hi}")
    return v


def _vec3(v, path):
    if not isinstance(v, list) or len(v) != 3 or not all(_is_number(c) for c in v):
        raise ValidationError(f"{path}: must be a list of three numbers")
    if not all(math.isfinite(c) for c in v) or math.sqrt(sum(c * c for c in v)) == 0.0:
        raise ValidationError(f"{path}: must be a finite non-zero vector")
    return [float(c) for c in v]


def _complex(v, path):
    if _is_number(v):
        return [float(v), 0.0]
    if isinstance(v, list) and len(v) == 2 and all(_is_number(c) for c in v):
        return [float(v[0]), float(v[1])]
    raise ValidationError(f"{path}: must be a number or [re, im]")


def _number(v, path):
    if not _is_number(v) or not math.isfinite(v):
        raise ValidationError(f"{path}: must be a finite number")
    return float(v)


def _parse_generators(gens) -> tuple:
    if not isinstance(gens, list) or not gens:
        raise ValidationError("generators: must be a non-empty list")
    out, seen = [], set()
    for i, g in enumerate(gens):
        path = f"generators[{i}]"
        if not isinstance(g, dict):
            raise ValidationError(f"{path}: must be an object")
        kind = g.get("kind")
        if kind not in GENERATOR_KEYS:
            raise ValidationError(f"{path}.kind: must be one of rotation, mobius, twist")
        for k in g:
            if k not in GENERATOR_KEYS[kind]:
                raise ValidationError(f"unknown key '{path}.{k}'")
        for k in GENERATOR_KEYS[kind]:
            if k not in g:
                raise ValidationError(f"{path}.{k}: required field missing")
        name = g["name"]
        if not isinstance(name, str) or not name or "," in name or "^" in name:
            raise ValidationError(f"{path}.name: must be a non-empty string without ',' or '^'")
        if name in seen:
            raise ValidationError(f"{path}.name: duplicate generator name {name!r}")
        seen.add(name)
        if kind == "rotation":
            rec = {"name": name, "kind": kind, "axis": _vec3(g["axis"], f"{path}.axis"),
                   "angle": _number(g["angle"], f"{path}.angle")}
        elif kind == "twist":
            rec = {"name": name, "kind": kind, "axis": _vec3(g["axis"], f"{path}.axis"),
                   "strength": _number(g["strength"], f"{path}.strength")}
        else:
            rec = {"name": name, "kind": kind, **{k: _complex(g[k], f"{path}.{k}") for k in "abcd"}}
        try:
            primitive_from_record(rec)
        except ValidationError as e:
            raise ValidationError(f"{path}: {e}") from None
        out.append(rec)
    return tuple(out)


def primitive_from_record(rec: dict):
    kind = rec["kind"]
    if kind == "rotation":
        return Rotation(tuple(normalize(np.array(rec["axis"]))), rec["angle"])
    if kind == "twist":
        return Twist(tuple(normalize(np.array(rec["axis"]))), rec["strength"])
    a, b, c, d = (complex(*rec[k]) for k in "abcd")
    return Mobius.normalized(a, b, c, d)


def _check_option(key, v, path):
    kind = OPTIONS[key][0]
    if kind == "int":
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise ValidationError(f"{path}: must be a positive integer")
        if key == "lyapunov_steps" and v < 100:
            raise ValidationError(f"{path}: must be >= 100")
        return v
    if kind == "float":
        v = _number(v, path)
        if v <= 0:
            raise ValidationError(f"{path}: must be positive")
        return v
    if kind == "str":
        if not isinstance(v, str):
            raise ValidationError(f"{path}: must be a string")
        if not (v == "random" or v.startswith("periodic:")):
            raise ValidationError(f"{path}: must be 'random' or 'periodic:<letters>'")
        return v
    if kind == "point":
        return _vec3(list(v), path)
    if kind == "triple":
        if not isinstance(v, list) or len(v) != 3:
            raise ValidationError(f"{path}: must be three points")
        pts = [_vec3(list(p), f"{path}[{i}]") for i, p in enumerate(v)]
        try:
            TripleConfig(*(normalize(np.array(p)) for p in pts))
        except ValidationError as e:
            raise ValidationError(f"{path}: {e}") from None
        return pts
    if kind == "rotation":
        if not isinstance(v, dict) or set(v) != {"axis", "angle"}:
            raise ValidationError(f"{path}: must be an object with axis and angle")
        return {"axis": _vec3(v["axis"], f"{path}.axis"), "angle": _number(v["angle"], f"{path}.angle")}
    if kind == "floats":
        if not isinstance(v, (list, tuple)) or not v:
            raise ValidationError(f"{path}: must be a non-empty list of numbers")
        vals = [_number(x, f"{path}[{i}]") for i, x in enumerate(v)]
        if any(x < 0 for x in vals):
            raise ValidationError(f"{path}: must be non-negative")
        return vals
    raise AssertionError(kind)


def parse_word(S: GeneratorSet, spec: str, seed: int) -> SymbolicWord:
    """'random' or 'periodic:a,b^-1,...' using generator names (first letter acts first)."""
    if spec == "random":
        return SymbolicWord.random(S, seed)
    if not spec.startswith("periodic:"):
        raise ValidationError(f"word must be 'random' or 'periodic:<letters>', got {spec!r}")
    body = spec[len("periodic:"):]
    core = []
    for tok in body.split(","):
        tok = tok.strip()
        name, e = (tok[:-3], -1) if tok.endswith("^-1") else (tok, 1)
        if name not in S.names:
            raise ValidationError(f"unknown generator {name!r} in word {spec!r}")
        if e == -1 and not S.symmetric:
            raise ValidationError(f"inverse letter {tok!r} in a non-symmetric scenario")
        core.append((S.names.index(name), e))
    if not core:
        raise ValidationError("periodic word needs at least one letter")
    return SymbolicWord(S.alphabet, "periodic", tuple(core))


# -- running ----------------------------------------------------------------------------


@dataclass
class Report:
    scenario: Scenario
    blocks: dict
    truncated: bool
    wall_clock: dict  # seconds per block; kept out of the JSON so reports stay byte-identical
    fields: dict = field(default_factory=dict, repr=False)  # epsilon -> MetricField, for CSV export

    def to_json(self) -> dict:
        return {
            "library_version": __version__,
            "scenario": self.scenario.echo(),
            "truncated": self.truncated,
            "experiments": {k: _plain(v) for k, v in self.blocks.items()},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, allow_nan=False) + "\n"


class _Context:
    """Caches shared between experiments of one run (balls, level sums, metric fields)."""

    def __init__(self, s: Scenario, threads: int):
        self.s = s
        self.S = s.generator_set()
        self.threads = threads
        self._ball: WordBall | None = None
        self._grams = {}
        self.fields = {}

    def ball(self, n: int) -> WordBall:
        if self._ball is None or self._ball.radius < n:
            self._ball = enumerate_ball(self.S, max(n, self.s.max_radius), cap=self.s.option("element_cap"))
        b = self._ball.restrict(n) if self._ball.radius > n else self._ball
        return b

    def complete_ball(self, n: int) -> WordBall:
        b = self.ball(n)
        if b.truncated:
            raise TruncatedBallError(f"ball of radius {n} hit the element cap of {self.s.option('element_cap')}")
        return b

    def grams(self, N: int):
        if N not in self._grams:
            pts = fibonacci_sphere(self.s.samples)
            self._grams[N] = level_grams(self.S, N, pts, self.complete_ball(N), self.threads, with_max=True)
        return self._grams[N]

    def field(self, eps: float) -> MetricField:
        if eps not in self.fields:
            N = self.s.option("pesin_radius")
            g, _ = self.grams(N)
            self.fields[eps] = build_averaged_metric(self.S, eps, N, self.s.samples, self.complete_ball(N),
                                                     self.threads, grams=g)
        return self.fields[eps]


def run_scenario(s: Scenario, threads: int = 1, only=None) -> Report:
    """Run the scenario's experiments in the fixed order, one result block each.

    A failing block records its error and the run continues.
    """
    ctx = _Context(s, threads)
    blocks, clock = {}, {}
    truncated = False
    for name in EXPERIMENTS:
        if name not in s.experiments or (only is not None and name not in only):
            continue
        t0 = time.perf_counter()
        try:
            block = {"status": "ok", **_RUNNERS[name](ctx)}
        except TruncatedBallError as e:
            block = {"status": "truncated", "error": str(e)}
        except (ValidationError, PreconditionError, FixedPointNotFound, DensityError, ArithmeticError,
                np.linalg.LinAlgError) as e:
            block = {"status": "error", "error": f"{type(e).__name__}: {e}"}
        if block.get("truncated") or block["status"] == "truncated":
            truncated = True
        blocks[name] = block
        clock[name] = time.perf_counter() - t0
    return Report(s, blocks, truncated, clock, ctx.fields)


def _growth(ctx: _Context) -> dict:
    s = ctx.s
    ball = ctx.ball(s.max_radius)
    rows = [{"radius": k, "count": c, "log_count": math.log(c)} for k, c in enumerate(ball.counts)]
    out = {"rows": rows, "truncated": ball.truncated}
    if s.max_radius >= 4:
        rep = growth_exponent(ball)
        out.update(exponent=rep.exponent, classification=rep.classification)
    else:
        out.update(exponent=None, classification=None)
    return out


def _derivs(ctx: _Context) -> dict:
    s = ctx.s
    n = s.option("derivs_radius")
    if n < 2:
        raise ValidationError("derivs needs a radius >= 2")
    ball = ctx.ball(n)
    budget = s.option("derivs_budget")
    rows = []
    for k in range(n + 1):
        c = ball.counts[k]
        rows.append({"radius": k, "count": c, "log_count": math.log(c),
                     "max_log_Dnorm": max_log_dnorm(ctx.S, k, budget, s.seed + k)})
    return {"rows": rows, "exponent": rows[-1]["max_log_Dnorm"] / n, "budget": budget,
            "truncated": ball.truncated}


def _crgrowth(ctx: _Context) -> dict:
    s = ctx.s
    rep = cr_growth_report(ctx.S, s.option("crgrowth_radius"), 2, s.option("crgrowth_budget"), s.seed)
    return {"lengths": list(rep.lengths), "max_c1": list(rep.max_c1), "max_c2": list(rep.max_c2),
            "rate_c1": rep.rate_c1, "rate_c2": rep.rate_c2, "slack": rep.slack, "bound_holds": rep.bound_holds}


def _lyapunov(ctx: _Context) -> dict:
    s, S = ctx.s, ctx.S
    w = parse_word(S, s.option("lyapunov_word"), s.seed)
    steps = s.option("lyapunov_steps")
    start = normalize(np.array(s.option("lyapunov_start")))
    rep = lyapunov_pair(S, w, start, steps, seed=s.seed)
    n_b = min(steps, 50)
    v = np.array([1.0, 0.0])
    bk = birkhoff_derivative_sum(S, w, start, v, n_b)
    n_e = min(steps, 1000)

    def coord(k):
        return lambda letter, p: float(p[k])

    emp = empirical_invariance_defect(S, w, start, n_e, [coord(0), coord(1), coord(2)])
    out = {
        "word": w.descriptor(), "steps": steps, "start": [float(c) for c in start],
        "lambda1": rep.lambda1, "lambda2": rep.lambda2, "pair_sum": rep.pair_sum,
        "log_det_mean": rep.log_det_mean,
        "birkhoff": {"n": n_b, "stepwise": bk.stepwise, "direct": bk.direct, "defect": bk.defect},
        "empirical": {"n": n_e, "defect": emp, "bound": 2.0 / n_e},
        "periodic": None,
    }
    if w.mode == "periodic":
        out["periodic"] = _periodic_point(ctx, w)
    return out


def _periodic_point(ctx: _Context, w: SymbolicWord) -> dict:
    s, S = ctx.s, ctx.S
    period = len(w.core)
    P = orbit_word(S, w.core)
    seed = normalize(np.array(s.option("fixed_point_seed")))
    rec = _fixed_point_or_failure(P, seed, s.option("fixed_point_radius"), S.describe(P.letters))
    out = {"period": period, "period_word": S.describe(P.letters), "fixed_point": rec}
    if rec["status"] == "converged":
        J = jacobian(P, np.array(rec["point"]))
        rho = float(np.max(np.abs(np.linalg.eigvals(J))))
        out["spectral_radius"] = rho
        out["predicted_lambda1"] = math.log(rho) / period
    else:
        out["spectral_radius"] = None
        out["predicted_lambda1"] = None
    return out


def _fixed_point_or_failure(f, seed, radius, descriptor) -> dict:
    try:
        return find_fixed_point(f, seed, radius, descriptor).to_json()
    except FixedPointNotFound as e:
        pt = e.best_point if e.best_point is not None else seed
        return {"point": [float(c) for c in pt], "residual": float(e.best_residual), "eigenvalues": [],
                "classification": "none", "word": descriptor, "status": "not_found", "fallback": True,
                "iterations": 0}
    except PreconditionError as e:
        return {"point": [float(c) for c in seed], "residual": float(e.residual), "eigenvalues": [],
                "classification": "none", "word": descriptor, "status": "seed_too_far", "fallback": False,
                "iterations": 0}


def _pesin(ctx: _Context) -> dict:
    s, S = ctx.s, ctx.S
    N = s.option("pesin_radius")
    ball = ctx.complete_ball(N)
    grams, gram_max = ctx.grams(N)
    runs = []
    for eps in s.epsilon:
        fld = ctx.field(eps)
        tail = tail_report(S, eps, N, s.samples, ball, ctx.threads, grams=grams, gram_max=gram_max)
        dil = generator_dilatations(S, fld)
        runs.append({
            "epsilon": eps, "N": N,
            "min_eigenvalue": fld.min_eigenvalue(),
            "spd": bool(fld.min_eigenvalue() > 0),
            "max_dilatation_per_generator": dil,
            "dilatation_bound": math.exp(2.0 * eps),
            "increments": list(tail.increments),
            "tail_slope": tail.slope,
            "predicted_tail_slope": tail.predicted_slope,
            "tail_threshold": tail.threshold,
            "tail_bound_holds": tail.bound_holds,
            "tail_matches_prediction": (tail.slope is None or tail.predicted_slope is None
                                        or abs(tail.slope - tail.predicted_slope) <= 0.1),
        })
    out = {"samples": s.samples, "runs": runs, "lipschitz": None}
    if S.symmetric:
        NL = s.option("lipschitz_radius")
        reps = lipschitz_checks(S, s.epsilon, NL, s.samples, (-1, 1), ctx.threads, ctx.complete_ball(NL + 1))
        out["lipschitz"] = [{
            "epsilon": r.epsilon, "N": r.N, "weight_sign": r.weight_sign,
            "upper_violation": r.upper_violation,
            "lower_violation": r.lower_violation,
            "lower_reindexed_violation": r.lower_reindexed_violation,
            "passed": r.passed, "reindexed_passed": r.reindexed_passed,
        } for r in reps]
    return out


def _qc(ctx: _Context) -> dict:
    s, S = ctx.s, ctx.S
    rnd = {S.letter_name(l): qc_dilatation(S.word((l,))) for l in S.alphabet}
    N = s.option("pesin_radius")
    runs = []
    for eps in s.epsilon:
        dil = generator_dilatations(S, ctx.field(eps))
        runs.append({"epsilon": eps, "N": N, "max_dilatation_per_generator": dil,
                     "bound": math.exp(2.0 * eps),
                     "within_bound": all(v <= math.exp(2.0 * eps) for v in dil.values())})
    return {"round": rnd, "runs": runs}


def _recur(ctx: _Context) -> dict:
    s, S = ctx.s, ctx.S
    n = s.option("recur_radius")
    ball = ctx.ball(n)
    tri = s.option("triple")
    triple = TripleConfig(*(normalize(np.array(p)) for p in tri)) if tri else TripleConfig.default()
    pair = pigeonhole_pair(ball, triple)
    f = pair.f
    word = S.describe(f.letters)
    fps = []
    if not pair.degenerate:
        for x in triple.array():
            fps.append(_fixed_point_or_failure(f, x, s.option("fixed_point_radius"), word))
    hull = orbit_hull_diameter(f, triple.x1, s.option("hull_k"), operator_norm_D(f))
    return {
        "radius": n, "ball_size": len(ball), "truncated": ball.truncated,
        "min_pair_distance": pair.triple_distance,
        "pigeonhole_bound": pair.bound,
        "within_bound": pair.triple_distance <= pair.bound,
        "g_word": S.describe(pair.g), "h_word": S.describe(pair.h),
        "f_word": word,
        "displacements": list(pair.displacement),
        "degenerate": pair.degenerate,
        "fixed_points": fps,
        "orbit_hull": {"k": hull.order, "diameter": hull.diameter, "displacement": hull.displacement,
                       "dnorm": hull.dnorm, "bound": hull.bound},
    }


def _order(ctx: _Context) -> dict:
    s, S = ctx.s, ctx.S
    r = min(s.option("order_radius"), s.max_radius) if s.max_radius > 0 else 0
    ball = ctx.ball(r)
    kmax = s.option("kmax")
    rows, hist = [], {}
    for w in ball.words:
        k = element_order(S.word(w), kmax)
        rows.append({"word": S.describe(w), "order": k})
        key = "infinite" if k is None else str(k)
        hist[key] = hist.get(key, 0) + 1
    finite = [r_["order"] for r_ in rows if r_["order"] is not None]
    exponent = math.lcm(*finite) if len(finite) == len(rows) else None
    return {"radius": r, "kmax": kmax, "elements": rows,
            "histogram": dict(sorted(hist.items(), key=lambda kv: (kv[0] == "infinite", len(kv[0]), kv[0]))),
            "exponent": exponent, "truncated": ball.truncated}


def _conjfamily(ctx: _Context) -> dict:
    s = ctx.s
    rr = s.option("conj_rotation")
    R = Rotation(tuple(normalize(np.array(rr["axis"]))), rr["angle"])
    axis = tuple(normalize(np.array(s.option("conj_axis"))))
    kmax = s.option("kmax")
    rows = conjugated_rotation_family(R, s.option("conj_strengths"), axis, kmax)
    rot = Diffeomorphism.of(R)
    r_order = element_order(rot, kmax)
    r_id = c0_distance(rot, Diffeomorphism.identity())
    K = [r.dilatation for r in rows]
    D = [r.distance_to_rotation for r in rows]
    return {
        "rotation": {"axis": list(R.axis), "angle": R.angle, "order": r_order},
        "twist_axis": list(axis),
        "rows": [{"strength": r.strength, "dilatation": r.dilatation,
                  "distance_to_rotation": r.distance_to_rotation,
                  "distance_to_identity": r.distance_to_identity, "order": r.order} for r in rows],
        "dilatation_decreasing": all(b <= a * RIPPLE for a, b in zip(K, K[1:])),
        "distance_decreasing": all(b <= a * RIPPLE + 1e-12 for a, b in zip(D, D[1:])),
        "order_preserved": all(r.order == r_order for r in rows),
        "triangle_holds": all(r.distance_to_identity >= r_id - r.distance_to_rotation - 1e-12 for r in rows),
    }


_RUNNERS = {
    "growth": _growth, "derivs": _derivs, "crgrowth": _crgrowth, "lyapunov": _lyapunov, "pesin": _pesin,
    "qc": _qc, "recur": _recur, "order": _order, "conjfamily": _conjfamily,
}


# -- output -----------------------------------------------------------------------------


def _plain(v):
    """JSON-ready copy: numpy scalars to Python, tuples to lists, non-finite floats to null."""
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_plain(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def report_schema() -> dict:
    return json.loads((resources.files("burnside_lab") / "report.schema.json").read_text())


def validate_report(doc: dict) -> None:
    jsonschema.validate(doc, report_schema())


TABLE_HEADERS = {
    "growth": ("radius", "count", "log_count", "max_log_Dnorm"),
    "derivs": ("radius", "count", "log_count", "max_log_Dnorm"),
    "pesin": ("sample_index", "x", "y", "z", "m11", "m12", "m22"),
    "qc": ("sample_index", "x", "y", "z", "m11", "m12", "m22"),
}


def table_rows(report: Report, name: str, eps: float | None = None) -> list:
    """Rows for the CSV form of a block (header first)."""
    block = report.blocks[name]
    rows = [TABLE_HEADERS[name]]
    if name in ("growth", "derivs"):
        for r in block.get("rows", []):
            rows.append((r["radius"], r["count"], repr(float(r["log_count"])),
                         "" if "max_log_Dnorm" not in r else repr(float(r["max_log_Dnorm"]))))
        return rows
    fld = report.fields.get(eps if eps is not None else report.scenario.epsilon[0])
    if fld is None:
        return rows
    for i, (p, m) in enumerate(zip(fld.points, fld.matrices)):
        rows.append((i, *(repr(float(c)) for c in p), repr(float(m[0, 0])), repr(float(m[0, 1])),
                     repr(float(m[1, 1]))))
    return rows


def field_summary(report: Report, name: str, eps: float) -> dict:
    """{epsilon, N, max_dilatation_per_generator, tail_slope} for one epsilon of pesin / qc."""
    out = {"epsilon": eps, "N": report.scenario.option("pesin_radius"),
           "max_dilatation_per_generator": None, "tail_slope": None}
    for key in ("pesin", "qc"):
        block = report.blocks.get(key, {})
        for run in block.get("runs", []):
            if run["epsilon"] == eps:
                out["max_dilatation_per_generator"] = run["max_dilatation_per_generator"]
                if "tail_slope" in run:
                    out["tail_slope"] = run["tail_slope"]
    return _plain(out)
