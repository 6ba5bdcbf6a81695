"""Command-line interface.

Subcommands: solve (certificate), design (integer search), evaluate
(report bundle), compare (ratios of two designs), sweep (theta grid CSV).
Exit codes: 0 success, 1 runtime/search failure, 2 validation error.  The
environment variable CROSSOVER_THREADS caps chunk-level parallelism.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import evaluation
from .design_io import design_to_dict, load_design
from .design_search import ExactDesign, exact_search
from .dropout_model import load_mechanism
from .errors import CrossoverError, ValidationError
from .fixtures import FIXTURES, get_fixture
from .q_solver import closed_form, solve_minimax

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_VALIDATION = 2


def _print_json(payload) -> None:
    print(json.dumps(payload, sort_keys=True, indent=2))


def _resolve_design_and_mech(args, design_flag: str = "design", fixture_flag: str = "fixture"):
    fixture_name = getattr(args, fixture_flag.replace("-", "_"), None)
    design_path = getattr(args, design_flag.replace("-", "_"), None)
    if (fixture_name is None) == (design_path is None):
        raise ValidationError(f"give exactly one of --{design_flag} or --{fixture_flag}")
    if fixture_name is not None:
        fixture = get_fixture(fixture_name)
        design = fixture.design
        mech = fixture.mechanism
    else:
        design = load_design(design_path)
        mech = None
    if args.mech is not None:
        mech = load_mechanism(args.mech)
    if mech is None:
        raise ValidationError("a mechanism file is required (--mech) for non-fixture designs")
    return design, mech


def _cmd_solve(args) -> int:
    mech = load_mechanism(args.mech)
    if args.closed_form_only:
        cert = closed_form(mech, args.t)
        if cert is None:
            print("no closed-form regime applies to this mechanism", file=sys.stderr)
            return EXIT_RUNTIME
    else:
        cert = solve_minimax(mech, args.t, budget=args.budget)
    _print_json(cert.to_dict())
    return EXIT_OK


def _cmd_design(args) -> int:
    mech = load_mechanism(args.mech)
    cert = solve_minimax(mech, args.t, budget=args.budget)
    design, report = exact_search(
        args.n, cert, mech, seed=args.seed, restarts=args.restarts, iters=args.iters
    )
    _print_json({"design": design_to_dict(design), "report": report.to_dict()})
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    design, mech = _resolve_design_and_mech(args)
    cert = solve_minimax(mech, design.t)
    reports = evaluation.evaluate_reports(
        design,
        mech,
        args.criterion,
        cert,
        args.method,
        seed=args.seed,
        reps=args.reps,
        exact_budget=args.exact_budget,
    )
    _print_json(
        {
            "design": design_to_dict(design),
            "mechanism": mech.to_dict(),
            "reports": [r.to_dict() for r in reports],
        }
    )
    return EXIT_OK


def _cmd_compare(args) -> int:
    if args.fixture is not None:
        design = get_fixture(args.fixture).design
    elif args.design is not None:
        design = load_design(args.design)
    else:
        raise ValidationError("give --design or --fixture")
    if args.baseline_fixture is not None:
        baseline = get_fixture(args.baseline_fixture).design
    elif args.baseline is not None:
        baseline = load_design(args.baseline)
    else:
        raise ValidationError("give --baseline or --baseline-fixture")
    mech = load_mechanism(args.mech)
    result = evaluation.compare(
        design,
        baseline,
        mech,
        args.criterion,
        args.method,
        seed=args.seed,
        reps=args.reps,
        exact_budget=args.exact_budget,
    )
    _print_json(
        {
            "criterion": args.criterion.upper(),
            "phi0_ratio": result.phi0_ratio if result.phi0_ratio is not None else "undefined",
            "v_ratio": result.v_ratio if result.v_ratio is not None else "undefined",
        }
    )
    return EXIT_OK


def _cmd_sweep(args) -> int:
    if args.search:
        source: ExactDesign | str = "search"
        if args.p is None or args.t is None or args.n is None:
            raise ValidationError("sweep --search needs --p, --t and --n")
        p, t, n = args.p, args.t, args.n
    else:
        if args.fixture is not None:
            source = get_fixture(args.fixture).design
        elif args.design is not None:
            source = load_design(args.design)
        else:
            raise ValidationError("give --design, --fixture or --search")
        p = t = n = None
    rows = evaluation.sweep_theta(
        source,
        evaluation.parse_theta_grid(args.theta_grid),
        args.criterion,
        p=p,
        t=t,
        n=n,
        method=args.method,
        seed=args.seed,
        reps=args.reps,
        exact_budget=args.exact_budget,
        restarts=args.restarts,
    )
    sys.stdout.write(evaluation.sweep_rows_to_csv(rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossover-dropout",
        description="Crossover designs under subject dropout: certificates, search, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_eval_opts(cmd, with_reps=True):
        cmd.add_argument("--criterion", default="all", help="a|d|e|t|all")
        cmd.add_argument("--method", default="exact", choices=["exact", "mc"])
        cmd.add_argument("--seed", type=int, default=0)
        if with_reps:
            cmd.add_argument("--reps", type=int, default=evaluation.DEFAULT_REPS)
        cmd.add_argument(
            "--exact-budget", type=int, default=evaluation.DEFAULT_EXACT_BUDGET
        )

    solve = sub.add_parser("solve", help="optimality certificate for a mechanism")
    solve.add_argument("--mech", required=True)
    solve.add_argument("--t", type=int, required=True)
    solve.add_argument("--budget", type=int, default=10**6)
    solve.add_argument("--closed-form-only", action="store_true")
    solve.set_defaults(func=_cmd_solve)

    design = sub.add_parser("design", help="search an exact design of size n")
    design.add_argument("--mech", required=True)
    design.add_argument("--t", type=int, required=True)
    design.add_argument("--n", type=int, required=True)
    design.add_argument("--seed", type=int, default=0)
    design.add_argument("--restarts", type=int, default=8)
    design.add_argument("--iters", type=int, default=500)
    design.add_argument("--budget", type=int, default=10**6)
    design.set_defaults(func=_cmd_design)

    ev = sub.add_parser("evaluate", help="expected-criterion report for a design")
    ev.add_argument("--design")
    ev.add_argument("--fixture", choices=sorted(FIXTURES))
    ev.add_argument("--mech")
    add_eval_opts(ev)
    ev.set_defaults(func=_cmd_evaluate)

    cmp_cmd = sub.add_parser("compare", help="phi0 and variance ratios of two designs")
    cmp_cmd.add_argument("--design")
    cmp_cmd.add_argument("--fixture", choices=sorted(FIXTURES))
    cmp_cmd.add_argument("--baseline")
    cmp_cmd.add_argument("--baseline-fixture", choices=sorted(FIXTURES))
    cmp_cmd.add_argument("--mech", required=True)
    add_eval_opts(cmp_cmd)
    cmp_cmd.set_defaults(func=_cmd_compare)

    sweep = sub.add_parser("sweep", help="CSV sweep over two-point mechanisms")
    sweep.add_argument("--design")
    sweep.add_argument("--fixture", choices=sorted(FIXTURES))
    sweep.add_argument("--search", action="store_true")
    sweep.add_argument("--p", type=int)
    sweep.add_argument("--t", type=int)
    sweep.add_argument("--n", type=int)
    sweep.add_argument("--theta-grid", default="0.05:0.95:0.05")
    sweep.add_argument("--restarts", type=int, default=8)
    add_eval_opts(sweep)
    sweep.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except CrossoverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
