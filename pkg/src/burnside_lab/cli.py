"""``burnside-lab`` command line entry point."""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

from .errors import ValidationError
from .scenario import (
    EXPERIMENTS,
    TABLE_HEADERS,
    U64_MAX,
    field_summary,
    load_scenario,
    run_scenario,
    table_rows,
    validate_report,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RESOURCE = 3
THREADS_ENV = "BURNSIDE_LAB_THREADS"


def _u64(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v <= U64_MAX:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _floats(text: str, count: int, what: str) -> list:
    try:
        vals = [float(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{what}: expected comma-separated numbers") from None
    if len(vals) != count:
        raise argparse.ArgumentTypeError(f"{what}: expected {count} numbers, got {len(vals)}")
    return vals


def _point(text: str) -> list:
    return _floats(text, 3, "--start")


def _triple(text: str) -> list:
    v = _floats(text, 9, "--triple")
    return [v[0:3], v[3:6], v[6:9]]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True,
                        help="scenario JSON file, or the name of a shipped scenario")
    common.add_argument("--seed", type=_u64, default=None, help="override the scenario seed")
    common.add_argument("--out", default=None, help="output directory (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default=None,
                        help="output format (default: the scenario's output_format)")
    common.add_argument("--threads", type=_positive, default=None,
                        help=f"worker threads (fallback: ${THREADS_ENV}, then 1)")

    p = argparse.ArgumentParser(prog="burnside-lab",
                                description="Word growth, derivative cocycles, averaged metrics and "
                                            "recurrence for groups of sphere diffeomorphisms.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, parents=[common], help=f"run the {name} experiment")
        if name == "lyapunov":
            sp.add_argument("--word", default=None, help="periodic:<a,b^-1,...> or random")
            sp.add_argument("--steps", type=_positive, default=None)
            sp.add_argument("--start", type=_point, default=None, help="x,y,z")
        if name == "recur":
            sp.add_argument("--radius", type=_positive, default=None)
            sp.add_argument("--triple", type=_triple, default=None, help="x1,y1,z1,x2,y2,z2,x3,y3,z3")
        if name in ("recur", "order", "conjfamily"):
            sp.add_argument("--kmax", type=_positive, default=None)
    sub.add_parser("run", parents=[common], help="run every experiment listed in the scenario")
    return p


def _threads(arg) -> int:
    if arg is not None:
        return arg
    env = os.environ.get(THREADS_ENV)
    if env is None or env == "":
        return 1
    try:
        v = int(env)
    except ValueError:
        raise ValidationError(f"{THREADS_ENV} must be a positive integer, got {env!r}") from None
    if v < 1:
        raise ValidationError(f"{THREADS_ENV} must be a positive integer, got {env!r}")
    return v


def _csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    return buf.getvalue()


def _emit(text: str, out: Path | None, filename: str, stream=None) -> None:
    if out is None:
        (stream or sys.stdout).write(text)
    else:
        (out / filename).write_text(text)


def _write_outputs(report, names, fmt: str, out: Path | None) -> None:
    doc = report.to_json()
    validate_report(doc)
    tabular = [n for n in names if n in TABLE_HEADERS and n in report.blocks]
    # experiments without a CSV form still get the JSON report
    if fmt == "json" or out is not None or not tabular:
        _emit(report.dumps(), out, "report.json")
    if out is not None:
        clock = {k: round(v, 6) for k, v in report.wall_clock.items()}
        (out / "timing.json").write_text(json.dumps({"wall_clock_seconds": clock}, indent=2) + "\n")
    if fmt != "csv":
        return
    s = report.scenario
    for name in tabular:
        if name in ("growth", "derivs"):
            _emit(_csv_text(table_rows(report, name)), out, f"{name}.csv")
            continue
        if out is None and len(s.epsilon) > 1:
            raise ValidationError(f"{name} CSV for several epsilons needs --out")
        for eps in s.epsilon:
            suffix = "" if len(s.epsilon) == 1 else f"_eps{eps:g}"
            _emit(_csv_text(table_rows(report, name, eps)), out, f"{name}{suffix}.csv")
            summary = json.dumps(field_summary(report, name, eps), indent=2) + "\n"
            _emit(summary, out, f"{name}{suffix}_summary.json", sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_VALIDATION if e.code not in (0, None) else EXIT_OK
    try:
        scenario = load_scenario(args.scenario)
        over = {"seed": args.seed}
        if args.command == "lyapunov":
            over.update(lyapunov_word=args.word, lyapunov_steps=args.steps, lyapunov_start=args.start)
        if args.command == "recur":
            over.update(recur_radius=args.radius, triple=args.triple)
        if getattr(args, "kmax", None) is not None:
            over["kmax"] = args.kmax
        scenario = scenario.with_overrides(**over)
        if args.command == "run":
            names = scenario.experiments
        else:
            names = (args.command,)
            scenario = scenario.with_overrides(experiments=names)
        threads = _threads(args.threads)
        fmt = args.format or scenario.output_format
        out = None
        if args.out is not None:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
        report = run_scenario(scenario, threads=threads)
        _write_outputs(report, names, fmt, out)
    except ValidationError as e:
        print(f"burnside-lab: error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    if report.truncated:
        print("burnside-lab: a word ball hit the element cap; report is truncated", file=sys.stderr)
        return EXIT_RESOURCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
