import argparse
import json
import logging
import sys
from fractions import Fraction
from itertools import product
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .bellman import (ConstraintTriple, Exponents, bellman_on_surface, critical_f, hp, k_value, omega,
                      upper_bound, validate_triple)
from .config import DUMPS_DIR, INEQUALITY_RTOL, N_JOBS
from .errors import BellmanError, DomainError, SurfaceError
from .extremal import (ExtremalParams, analytic_norms, build_phi, build_s, construction_table,
                       export_construction, verify_construction)
from .harness import SUITE_ALIASES, SUITES, SuiteConfig, convergence_study, resolve_suite, run_suite, summarize
from .tree import MAdicTree

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.15g"

SWEEP_COLUMNS = "p, q, f, A, F, omega_q, exact, upper, k, on_surface, status"

SWEEP_EPILOG = f"""\
Columns: {SWEEP_COLUMNS}.
  F        critical surface value F(f, A) (surface mode) or the given F (triple mode)
  omega_q  omega_q(f^q / A)
  exact    Bellman value on the critical surface, empty off the surface
  upper    general upper bound F h^(-1)(k)^p
  k        (p f^(p-q) A - (p-q) f^p) / F
  status   ok, or the reason the point has no value
Ranges are start:stop:steps (inclusive, evenly spaced) or a single number.
Exit code 1 if any row has exact > upper.
"""


def _num(x) -> Optional[float]:
    """Round to 15 significant digits for printing."""
    if x is None:
        return None
    return float(FLOAT_FORMAT % x)


def _print_record(record: Dict, as_json: bool):
    if as_json:
        print(json.dumps({k: (_num(v) if isinstance(v, (float, np.floating)) else v)
                          for k, v in record.items()}))
        return
    for key, value in record.items():
        text = FLOAT_FORMAT % value if isinstance(value, (float, np.floating)) else value
        print(f"{key} {text}")


def _print_table(df: pd.DataFrame, fmt: str = "text", out: Optional[str] = None):
    if fmt == "parquet":
        if not out:
            raise DomainError("--format parquet needs --out")
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        df.to_parquet(out, index=False)
        logger.info("Saved table to %s", out)
        return
    if fmt == "csv":
        text = df.to_csv(index=False, float_format=FLOAT_FORMAT)
    elif fmt == "json":
        text = df.to_json(orient="records", double_precision=15)
    else:
        text = df.to_string(index=False, float_format=lambda v: FLOAT_FORMAT % v)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
        logger.info("Saved table to %s", out)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def parse_range(text: str) -> np.ndarray:
    """'1.05:1.19:50' -> 50 evenly spaced values; '3' -> [3.0]."""
    parts = text.split(":")
    if len(parts) == 1:
        return np.array([float(parts[0])])
    if len(parts) != 3:
        raise DomainError(f"range must be start:stop:steps, got {text!r}")
    start, stop, steps = float(parts[0]), float(parts[1]), int(parts[2])
    if steps < 1:
        raise DomainError(f"range {text!r} is empty (steps must be >= 1)")
    return np.linspace(start, stop, steps)


def _sweep_row(p: float, q: float, f: float, A: float, F: Optional[float]) -> Dict:
    row = {"p": p, "q": q, "f": f, "A": A, "F": F if F is not None else np.nan, "omega_q": np.nan,
           "exact": np.nan, "upper": np.nan, "k": np.nan, "on_surface": False, "status": "ok"}
    try:
        exps = Exponents(p, q)
        if A > 0 and 0 < f ** q <= A:
            row["omega_q"] = omega(q, f ** q / A)
        if F is None:
            F = critical_f(exps, f, A)
            row["F"] = F
        triple = ConstraintTriple(f, A, F)
        validate_triple(exps, triple)
        row["k"] = k_value(exps, triple)
        report = upper_bound(exps, triple)
        row["upper"] = report.upper_bound
        row["on_surface"] = report.on_surface
        if report.exact_value is not None:
            row["exact"] = report.exact_value
    except SurfaceError:
        row["status"] = "surface error"
    except DomainError as e:
        row["status"] = f"domain error: {e}"
    return row


def cmd_omega(args) -> int:
    value = omega(args.p, args.tau)
    residual = abs(hp(args.p, value) - args.tau)
    _print_record({"omega": value, "residual": residual}, args.json)
    return 0


def cmd_bellman(args) -> int:
    exps = Exponents(args.p, args.q)
    big_f = critical_f(exps, args.f, args.A)
    exact = bellman_on_surface(exps, args.f, args.A)
    report = upper_bound(exps, ConstraintTriple(args.f, args.A, big_f))
    _print_record({"F": big_f, "exact": exact, "upper": report.upper_bound, "k": report.k,
                   "on_surface": report.on_surface}, args.json)
    return 0


def cmd_extremal(args) -> int:
    exps = Exponents(args.p, args.q)
    params = ExtremalParams.from_constraint(exps, args.f, args.A, Fraction(args.alpha))
    cons = build_s(MAdicTree(args.m, args.depth), params.alpha, args.max_rank)
    phi = build_phi(params, cons)
    table = construction_table(params, cons)
    report = verify_construction(params, cons, phi)
    truncated = analytic_norms(params, args.max_rank)["lower_bound_truncated"]
    passed = bool(report["passed"].all())
    if args.json:
        print(json.dumps({
            "z": _num(params.z), "gamma": _num(params.gamma), "lambda": _num(params.lam),
            "lower_bound_truncated": _num(truncated),
            "ranks": json.loads(table.to_json(orient="records", double_precision=15)),
            "checks": json.loads(report.to_json(orient="records", double_precision=15)),
            "status": "PASS" if passed else "FAIL",
        }))
    else:
        _print_record({"z": params.z, "gamma": params.gamma, "lambda": params.lam}, False)
        _print_table(table)
        _print_record({"lower_bound_truncated": truncated}, False)
        _print_table(report)
        print("PASS" if passed else "FAIL")
    if args.dump:
        export_construction(params, cons, phi, args.dump)
    return 0 if passed else 1


def cmd_verify(args) -> int:
    config = SuiteConfig(seed=args.seed, trials=args.trials, m=args.m, depth=args.depth,
                         n_jobs=args.n_jobs)
    suites = SUITES if args.suite == "all" else (resolve_suite(args.suite),)
    summaries = []
    for suite in suites:
        report = run_suite(suite, config)
        summaries.append(summarize(suite, report))
        if args.out:
            out = Path(args.out) / f"{suite}_seed{args.seed}.parquet"
            out.parent.mkdir(parents=True, exist_ok=True)
            report.to_parquet(out, index=False)
            logger.info("Saved %s report to %s", suite, out)
    summary = pd.DataFrame(summaries)
    if args.json:
        print(summary.to_json(orient="records"))
    else:
        _print_table(summary)
    return 0 if (summary["violations"] == 0).all() else 1


def cmd_sweep(args) -> int:
    grids = [parse_range(x) for x in (args.p, args.q, args.f, args.A)]
    big_fs: List[Optional[float]] = list(parse_range(args.F)) if args.F else [None]
    points = [(*pqfa, F) for pqfa in product(*grids) for F in big_fs]
    rows = Parallel(n_jobs=args.n_jobs)(delayed(_sweep_row)(*point) for point in points)
    table = pd.DataFrame(rows)
    _print_table(table, args.format, args.out)
    exact, upper = (pd.to_numeric(table[c], errors="coerce") for c in ("exact", "upper"))
    violated = exact > upper * (1.0 + INEQUALITY_RTOL)
    if violated.any():
        logger.warning("%d sweep points have exact > upper", int(violated.sum()))
        return 1
    return 0


def cmd_converge(args) -> int:
    exps = Exponents(args.p, args.q)
    if args.alphas:
        alphas = [Fraction(a) for a in args.alphas.split(",")]
    else:
        alphas = [Fraction(1, args.m ** i) for i in range(1, args.steps + 1)]
    table = convergence_study(exps, args.f, args.A, alphas, m=args.m, depth=args.depth)
    _print_table(table, args.format, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="run_bellman.py",
        description="Bellman function of the dyadic maximal operator with an L^q constraint: "
                    "exact values on the critical surface, upper bounds, extremal constructions "
                    "and randomized verification on finite m-adic trees.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("omega", help="inverse of H_p on [1, p/(p-1)]")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_omega)

    p = sub.add_parser("bellman", help="F(f, A), exact value and upper bound on the critical surface")
    for name in ("p", "q", "f", "A"):
        p.add_argument(f"--{name}", type=float, required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bellman)

    p = sub.add_parser("extremal", help="build and verify the extremal step function on a tree")
    for name in ("p", "q", "f", "A"):
        p.add_argument(f"--{name}", type=float, required=True)
    p.add_argument("--alpha", type=str, required=True, help="base-m rational, e.g. 1/8")
    p.add_argument("--depth", type=int, required=True, help="tree depth; needs k*(max_rank+1)")
    p.add_argument("--max-rank", dest="max_rank", type=int, required=True)
    p.add_argument("--m", type=int, default=2, help="branching (default: 2)")
    p.add_argument("--dump", type=str, default=None,
                   help=f"write the step function and member listing (e.g. {DUMPS_DIR / 'phi.txt'})")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_extremal)

    p = sub.add_parser("verify", help="run property suites on random step functions")
    p.add_argument("--suite", choices=SUITES + tuple(SUITE_ALIASES) + ("all",), default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--depth", type=int, default=10, help="largest tree depth drawn (default: 10)")
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--n-jobs", dest="n_jobs", type=int, default=N_JOBS)
    p.add_argument("--out", type=str, default=None, help="directory for per-suite parquet reports")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="tables of exact values and bounds over parameter ranges",
                       epilog=SWEEP_EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    for name in ("p", "q", "f", "A"):
        p.add_argument(f"--{name}", type=str, required=True)
    p.add_argument("--F", type=str, default=None, help="sweep given triples instead of the surface")
    p.add_argument("--format", choices=("csv", "json", "parquet"), default="csv")
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--n-jobs", dest="n_jobs", type=int, default=N_JOBS)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("converge", help="extremal lower bounds as alpha -> 0")
    for name in ("p", "q", "f", "A"):
        p.add_argument(f"--{name}", type=float, required=True)
    p.add_argument("--alphas", type=str, default=None, help="comma separated, e.g. 1/2,1/4,1/8")
    p.add_argument("--steps", type=int, default=10, help="use alpha = m^-1 .. m^-steps (default: 10)")
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--depth", type=int, default=16, help="depth budget for tree verification")
    p.add_argument("--format", choices=("text", "csv", "json", "parquet"), default="text")
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(func=cmd_converge)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Exit codes: 0 success, 1 property failure, 2 argument/domain error, 3 surface error, 4 tree capacity."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BellmanError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except (ValueError, ZeroDivisionError) as e:
        # malformed numbers such as --alpha 1/0
        print(f"error: {e}", file=sys.stderr)
        return 2
