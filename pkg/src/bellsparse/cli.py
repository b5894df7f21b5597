"""Command-line front end.

Exit codes: 0 success, 2 input/validation error, 3 solver error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import __version__
from .behavior import (
    Family,
    Scenario,
    check_no_signalling,
    load_behavior,
    make_family,
    mix,
    save_behavior,
)
from .corrbasis import chsh_correlation, z0_from_behavior
from .errors import BellError, FitDiverged, InsufficientData, SignallingInput
from .lp_baseline import DEFAULT_VARIABLE_CAP, ns_distance
from .quantify import (
    LOCALITY_THRESHOLD,
    Method,
    benchmark_scaling,
    compare_neg_ns,
    critical_visibility,
    fit_exp,
    neg_of_behavior,
    records_to_csv,
    sample_simplex,
)
from .sparse_solver import SolverConfig

logger = logging.getLogger("bellsparse")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3

FAMILY_ALIASES = {
    "wn": Family.WHITE_NOISE,
    "white_noise": Family.WHITE_NOISE,
    "ld": Family.LOCAL_DETERMINISTIC,
    "local_deterministic": Family.LOCAL_DETERMINISTIC,
    "pr": Family.GENERALIZED_PR,
    "generalized_pr": Family.GENERALIZED_PR,
}


class InputError(Exception):
    pass


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver")
    g.add_argument("--solver-config", type=Path, help="JSON file with solver options")
    g.add_argument("--mu-final", type=float)
    g.add_argument("--continuation-steps", type=int)
    g.add_argument("--max-iters", type=int, dest="max_iters_per_stage")
    g.add_argument("--stop-tol", type=float)
    g.add_argument("--stagnation-window", type=int)


def _solver_config(args) -> SolverConfig:
    opts = {}
    if args.solver_config is not None:
        try:
            opts.update(json.loads(args.solver_config.read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read solver config: {exc}") from None
    for name in SolverConfig.__dataclass_fields__:
        value = getattr(args, name, None)
        if value is not None:
            opts[name] = value
    try:
        return SolverConfig.from_dict(opts)
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from None


def _read_behavior(path):
    p = Path(path)
    if not p.is_file():
        raise InputError(f"no such file: {p}")
    try:
        return load_behavior(p)
    except json.JSONDecodeError as exc:
        raise InputError(f"{p}: malformed JSON: {exc}") from None


def _write(text: str, path) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_analyze(args) -> int:
    b = _read_behavior(args.input)
    config = _solver_config(args)
    report = check_no_signalling(b, args.ns_tol)
    out = {
        "behavior_id": args.behavior_id or Path(args.input).stem,
        "is_no_signalling": report.is_ns,
        "max_signalling": report.max_violation,
        "method": args.method,
    }
    if not report.is_ns:
        out.update(negativity=None, is_local=None)
        _write(json.dumps(out, indent=2) + "\n", args.output)
        print(f"error: behavior is signalling (violation {report.max_violation:.3e})",
              file=sys.stderr)
        return EXIT_INPUT
    rec = neg_of_behavior(b, args.method, config, behavior_id=out["behavior_id"])
    out["negativity"] = rec.negativity
    out["is_local"] = rec.negativity <= args.threshold
    out["converged"] = rec.converged
    if rec.iterations is not None:
        out["iterations"] = rec.iterations
    if args.ns_distance:
        out["ns_distance"] = ns_distance(b, pivot_rule="devex-bland")
    if (b.scenario.n, b.scenario.m) == (2, 2):
        out["chsh"] = chsh_correlation(z0_from_behavior(b))
    out["timing"] = {"wall_time_s": rec.wall_time}
    _write(json.dumps(out, indent=2) + "\n", args.output)
    if not rec.converged:
        print("warning: solver did not meet its stopping criterion", file=sys.stderr)
    return EXIT_OK


def cmd_gen(args) -> int:
    s = Scenario(args.n, args.m)
    if args.family == "mix":
        fams = [make_family(k, s) for k in (Family.WHITE_NOISE, Family.LOCAL_DETERMINISTIC,
                                            Family.GENERALIZED_PR)]
        if args.weights:
            try:
                w = [float(v) for v in args.weights.split(",")]
            except ValueError:
                raise InputError(f"bad --weights {args.weights!r}") from None
        else:
            w = list(sample_simplex(np.random.default_rng(args.seed)))
        b = mix(fams, w)
    else:
        b = make_family(FAMILY_ALIASES[args.family], s)
    if args.output is None:
        sys.stdout.write(b.to_json() + "\n")
    else:
        save_behavior(b, args.output)
    return EXIT_OK


def _parse_methods(text: str):
    try:
        return [Method(t.strip()) for t in text.split(",") if t.strip()]
    except ValueError:
        raise InputError(f"unknown method in {text!r}; choose from nesta, lp") from None


def cmd_bench(args) -> int:
    methods = _parse_methods(args.methods)
    if args.n_min < 2 or args.n_max < args.n_min:
        raise InputError("need 2 <= n-min <= n-max")
    config = _solver_config(args)
    rows = benchmark_scaling(range(args.n_min, args.n_max + 1), args.m, args.samples, args.seed,
                             methods, config, with_ns=not args.no_ns, jobs=args.jobs)
    for meta, rec in rows:
        if rec.error:
            print(f"warning: n={meta['n']} sample={meta['sample']} {rec.method.value}: "
                  f"{rec.error}, row flagged", file=sys.stderr)
    _write(records_to_csv(rows, include_timing=not args.no_timing), args.out)

    summary = {"fits": {}, "neg_vs_ns": {}, "mean_wall_time_s": {}}
    by_method = defaultdict(list)
    for meta, rec in rows:
        if rec.error is None and rec.wall_time > 0:
            by_method[rec.method.value].append((meta["n"], rec.wall_time))
    for method, pts in by_method.items():
        per_n = defaultdict(list)
        for n, t in pts:
            per_n[n].append(t)
        summary["mean_wall_time_s"][method] = {str(n): float(np.mean(t)) for n, t in sorted(per_n.items())}
        try:
            fit = fit_exp(pts)
            summary["fits"][method] = {"a": fit.a, "b": fit.b, "residual": fit.residual}
        except FitDiverged as exc:
            summary["fits"][method] = {"error": str(exc)}
    for method in methods:
        recs = [rec for _, rec in rows if rec.method is method and rec.error is None]
        for n in sorted({r.scenario.n for r in recs}):
            try:
                line = compare_neg_ns([r for r in recs if r.scenario.n == n])[n]
                summary["neg_vs_ns"].setdefault(method.value, {})[str(n)] = {
                    "slope": line.slope, "intercept": line.intercept, "r2": line.r2}
            except InsufficientData as exc:
                summary["neg_vs_ns"].setdefault(method.value, {})[str(n)] = {"error": str(exc)}
    if args.no_timing:
        summary.pop("fits")
        summary.pop("mean_wall_time_s")
    text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    if args.summary is not None:
        Path(args.summary).write_text(text)
    elif args.out not in (None, "-"):
        Path(str(args.out) + ".summary.json").write_text(text)
    else:
        sys.stderr.write(text)
    return EXIT_OK


def _behavior_arg(text: str, n: int, m: int):
    if text in FAMILY_ALIASES:
        return make_family(FAMILY_ALIASES[text], Scenario(n, m))
    return _read_behavior(text)


def cmd_sweep(args) -> int:
    target = _behavior_arg(args.target, args.n, args.m)
    noise = _behavior_arg(args.noise, args.n, args.m)
    config = _solver_config(args)
    lines = ["v,negativity,is_local"]
    for v in np.linspace(0.0, 1.0, args.points):
        b = mix([target, noise], [float(v), float(1.0 - v)])
        rec = neg_of_behavior(b, args.method, config)
        lines.append(f"{float(v)!r},{float(rec.negativity)!r},{rec.negativity <= args.threshold}")
    _write("\n".join(lines) + "\n", args.out)
    v_star = critical_visibility(target, noise, args.method, args.tol, config, args.threshold)
    print(json.dumps({"critical_visibility": v_star, "method": args.method, "tol": args.tol}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bellsparse", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="negativity and locality of a behavior JSON file")
    p.add_argument("input")
    p.add_argument("--method", choices=[m.value for m in Method], default="nesta")
    p.add_argument("--threshold", type=float, default=LOCALITY_THRESHOLD,
                   help="negativity at or below which the behavior is called local")
    p.add_argument("--ns-tol", type=float, default=1e-9)
    p.add_argument("--ns-distance", action="store_true", help="also compute the LP distance")
    p.add_argument("--behavior-id")
    p.add_argument("-o", "--output")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("gen", help="write a behavior JSON file")
    p.add_argument("--family", required=True, choices=sorted(FAMILY_ALIASES) + ["mix"])
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--weights", help="c0,c1,c2 for white noise, local deterministic, PR")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="timing benchmark over the number of outputs")
    p.add_argument("--n-min", type=int, default=2)
    p.add_argument("--n-max", type=int, default=6)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--methods", default="nesta,lp")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-ns", action="store_true", help="skip the LP distance column")
    p.add_argument("--no-timing", action="store_true", help="blank timing columns")
    p.add_argument("--out", default="-")
    p.add_argument("--summary")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="visibility scan of target/noise mixtures")
    p.add_argument("--target", default="pr", help="family alias or behavior JSON path")
    p.add_argument("--noise", default="wn", help="family alias or behavior JSON path")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--method", choices=[m.value for m in Method], default="lp")
    p.add_argument("--points", type=int, default=11)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--threshold", type=float, default=LOCALITY_THRESHOLD)
    p.add_argument("--out", default="-")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, SignallingInput) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BellError as exc:
        # validation failures on inputs vs. failures inside a solve
        code = EXIT_SOLVER if type(exc).__name__ in ("Infeasible", "FitDiverged") else EXIT_INPUT
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
