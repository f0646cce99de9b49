"""Command line entry point.

Exit codes: 0 certified or solved, 2 refuted or hypotheses not met,
3 theorem violation, 1 usage, file or evaluation error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Sequence

from .classifiers import PROPERTIES, check_condition_a, find_counterexample, run_property
from .expr import ExprError
from .nlpp import NlppError, NlppResult, solve
from .problem import BUILTINS, ProblemFile, ProblemFileError, load_builtin, load_problem
from .sampling import CertReport, SampleError, SamplingPlan, tolerance
from .sets import check_levelsets_imply_qsep, qsep_sublevel_sei
from .theorems import (
    verify_composition,
    verify_inf_marginal,
    verify_linear_combination,
    verify_sei_conda_implies_sep,
    verify_sei_implies_qsei,
    verify_sei_nonneg_dot_implies_psei,
    verify_sep_implies_qsep,
    verify_shift_property,
    verify_sup_family,
)

CERTIFY_NAMES = tuple(PROPERTIES) + ("condition_a",)


class UsageError(Exception):
    pass


def _need(pf: ProblemFile, attr: str, what: str):
    value = getattr(pf, attr)
    if value is None:
        raise UsageError(f"{pf.name}: this check needs {what}")
    return value


def _family(pf: ProblemFile):
    return _need(pf, "family", "a [family] table")


def _levelsets(pf: ProblemFile, plan: SamplingPlan, workers: int) -> CertReport:
    if not pf.r_values:
        raise UsageError(f"{pf.name}: levelsets_imply_qsep needs [levelsets].r_values")
    return check_levelsets_imply_qsep(_need(pf, "h", "h"), pf.S, pf.E, pf.Psi, pf.r_values, plan, workers)


SUITES: dict[str, Callable[[ProblemFile, SamplingPlan, int], CertReport]] = {
    "shift": lambda pf, plan, w: verify_shift_property(pf.triple(), plan, w),
    "linear_combination": lambda pf, plan, w: verify_linear_combination(_family(pf), pf.triple(), plan, w),
    "sup_family": lambda pf, plan, w: verify_sup_family(_family(pf), pf.triple(), plan, w),
    "composition": lambda pf, plan, w: verify_composition(_family(pf), pf.triple(), plan, w),
    "sep_implies_qsep": lambda pf, plan, w: verify_sep_implies_qsep(pf.triple(), plan, w),
    "inf_marginal": lambda pf, plan, w: verify_inf_marginal(
        _need(pf, "bivariate", "a [bivariate] table"), pf.triple(), pf.t_grid_plan(), plan, w),
    "sei_implies_qsei": lambda pf, plan, w: verify_sei_implies_qsei(pf.triple(), plan, w),
    "sei_conda_implies_sep": lambda pf, plan, w: verify_sei_conda_implies_sep(pf.triple(), plan, w),
    "sei_nonneg_dot_implies_psei": lambda pf, plan, w: verify_sei_nonneg_dot_implies_psei(pf.triple(), plan, w),
    "levelsets_imply_qsep": _levelsets,
    "qsep_sublevel_sei": lambda pf, plan, w: qsep_sublevel_sei(
        _family(pf).members, pf.E, pf.Psi, pf.S, plan, w),
}


def _certify(pf: ProblemFile, name: str, plan: SamplingPlan, workers: int) -> CertReport:
    if name not in CERTIFY_NAMES:
        raise UsageError(f"unknown property {name!r}; choose from {', '.join(CERTIFY_NAMES)}")
    if name == "condition_a":
        return check_condition_a(pf.triple(), plan, workers)
    return run_property(name, pf.triple(), plan, workers)


def _suite(pf: ProblemFile, name: str, plan: SamplingPlan, workers: int) -> CertReport:
    if name not in SUITES:
        raise UsageError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return SUITES[name](pf, plan, workers)


def _counterexample(pf: ProblemFile, name: str, plan: SamplingPlan, refine: bool, workers: int) -> CertReport:
    if name not in PROPERTIES:
        raise UsageError(f"unknown property {name!r}; choose from {', '.join(PROPERTIES)}")
    rep = run_property(name, pf.triple(), plan, workers)
    if not rep.certified:
        rep.witness = find_counterexample(name, pf.triple(), plan, refine=refine, workers=workers)
        rep.notes.append("witness is the largest-margin violation" + (", locally refined" if refine else ""))
    return rep


def _solve(pf: ProblemFile, plan: SamplingPlan, starts: int | None, workers: int) -> NlppResult:
    problem = _need(pf, "nlpp", "an [nlpp] table")
    return solve(problem, plan, starts if starts is not None else pf.starts, workers)


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--json", metavar="PATH", help="write the JSON report to PATH")
    p.add_argument("--seed", type=int, help="random seed of the sampling plan")
    p.add_argument("--grid", type=int, help="grid points per axis")
    p.add_argument("--random-pairs", type=int, help="number of random pairs")
    p.add_argument("--tol", type=float, help="relative violation tolerance (default 1e-9)")
    p.add_argument("--workers", type=int, default=1, help="threads for the sample scan")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="einvex", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("certify", help="check one property on samples")
    p.add_argument("property")
    p.add_argument("file")
    _common(p)

    p = sub.add_parser("counterexample", help="search for the worst violation of a property")
    p.add_argument("property")
    p.add_argument("file")
    p.add_argument("--refine", action="store_true", help="refine the witness by local search")
    _common(p)

    p = sub.add_parser("suite", help="run a closure or implication suite")
    p.add_argument("theorem")
    p.add_argument("file")
    _common(p)

    p = sub.add_parser("solve", help="solve the [nlpp] program of a problem file")
    p.add_argument("file")
    p.add_argument("--starts", type=int, help="number of multi-start local searches")
    _common(p)

    p = sub.add_parser("examples", help="run the built-in fixtures")
    p.add_argument("name", nargs="?", help=f"one of {', '.join(BUILTINS)}; omit to list")
    p.add_argument("--check", action="append", default=[], metavar="PROPERTY")
    p.add_argument("--suite", action="append", default=[], metavar="THEOREM")
    p.add_argument("--solve", action="store_true")
    p.add_argument("--starts", type=int)
    p.add_argument("--refine", action="store_true")
    _common(p)
    return parser


def _plan(pf: ProblemFile, args) -> SamplingPlan:
    kw: dict[str, Any] = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.grid is not None:
        kw["grid_per_axis"] = args.grid
    if args.random_pairs is not None:
        kw["random_pairs"] = args.random_pairs
    return replace(pf.plan, **kw) if kw else pf.plan


def _combined_exit(codes: Sequence[int]) -> int:
    for c in (3, 1, 2):
        if c in codes:
            return c
    return 0


def _emit(results: list, args, label: str) -> int:
    for r in results:
        print(r.summary())
    if args.json:
        if len(results) == 1:
            doc = results[0].to_dict()
        else:
            doc = {"problem": label, "reports": [r.to_dict() for r in results]}
        Path(args.json).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return _combined_exit([r.exit_code() for r in results])


def _dispatch(args) -> int:
    if args.command == "examples" and args.name is None:
        for name in BUILTINS:
            print(name)
        return 0
    if args.workers < 1:
        raise UsageError("--workers must be at least 1")
    pf = load_builtin(args.name) if args.command == "examples" else load_problem(args.file)
    plan = _plan(pf, args)
    w = args.workers
    if args.command == "certify":
        results = [_certify(pf, args.property, plan, w)]
    elif args.command == "counterexample":
        results = [_counterexample(pf, args.property, plan, args.refine, w)]
    elif args.command == "suite":
        results = [_suite(pf, args.theorem, plan, w)]
    elif args.command == "solve":
        results = [_solve(pf, plan, args.starts, w)]
    else:
        checks, suites, do_solve = args.check, args.suite, args.solve
        if not (checks or suites or do_solve):
            checks, suites, do_solve = list(pf.properties), list(pf.suites), pf.nlpp is not None
        results = []
        for c in checks:
            if args.refine:
                results.append(_counterexample(pf, c, plan, True, w))
            else:
                results.append(_certify(pf, c, plan, w))
        results += [_suite(pf, s, plan, w) for s in suites]
        if do_solve:
            results.append(_solve(pf, plan, args.starts, w))
    return _emit(results, args, pf.name)


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    if args.command is None:
        parser.print_help(sys.stderr)
        return 1
    try:
        if args.tol is not None:
            with tolerance(args.tol):
                return _dispatch(args)
        return _dispatch(args)
    except (UsageError, ProblemFileError, ExprError, NlppError, SampleError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
