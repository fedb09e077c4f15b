"""Command-line interface.

Exit codes: 0 solved with a feasible point, 2 infeasible, 3 time limit,
64 usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import benchmarks, expr, milp
from .driver import RunConfig, Toggles, generate_quadratic_sigmoid, solve_global
from .encoder import assemble
from .errors import InfeasibleApproximation, SurroptError
from .model import standardize

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_TIME_LIMIT = 3
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


def build_parser() -> _Parser:
    parser = _Parser(prog="surropt", description="Surrogate-driven global optimization")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve a problem file")
    solve.add_argument("file")
    _add_run_flags(solve)

    bench = sub.add_parser("bench", help="run a built-in benchmark")
    bench.add_argument("name", choices=["illustrative", "speed-reducer", "qsigmoid"])
    bench.add_argument("--n", type=int, default=10, help="qsigmoid dimension")
    bench.add_argument("--m", type=int, default=2, help="qsigmoid constraint count")
    _add_run_flags(bench)

    export = sub.add_parser("export-lp", help="write the approximation model as an LP file")
    export.add_argument("file")
    export.add_argument("out")
    _add_run_flags(export)
    return parser


def _add_run_flags(p) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--time-limit", type=float, default=1500.0)
    p.add_argument("--rho", type=float, nargs="*", default=None, help="robustness grid")
    p.add_argument("--lam", "--lambda", dest="lam", nargs="*", default=None,
                   help="relaxation penalties; 'none' = unrelaxed cell")
    p.add_argument("--norm-p", choices=["1", "inf"], default="1")
    p.add_argument("--no-oct-sampling", action="store_true")
    p.add_argument("--no-robust", action="store_true")
    p.add_argument("--no-relax", action="store_true")
    p.add_argument("--no-momentum", action="store_true")
    p.add_argument("--solver", choices=["builtin", "external"], default="builtin")
    p.add_argument("--report", help="write the run report as JSON to this path")


def _config_from_args(args) -> RunConfig:
    kwargs = {
        "seed": args.seed,
        "time_limit": args.time_limit,
        "norm_p": 1.0 if args.norm_p == "1" else float("inf"),
        "solver": args.solver,
        "toggles": Toggles(
            oct_sampling=not args.no_oct_sampling,
            robustness=not args.no_robust,
            relaxation=not args.no_relax,
            momentum=not args.no_momentum,
        ),
    }
    if args.rho is not None:
        kwargs["rho_grid"] = tuple(args.rho)
    if args.lam is not None:
        lam = tuple(None if str(v).lower() == "none" else float(v) for v in args.lam)
        kwargs["lambda_grid"] = lam
    return RunConfig(**kwargs)


def _load(path: str):
    try:
        return expr.load_problem(path)
    except FileNotFoundError:
        sys.stderr.write(f"surropt: problem file not found: {path}\n")
        sys.exit(EXIT_USAGE)
    except SurroptError as exc:
        sys.stderr.write(f"surropt: cannot load {path}: {exc}\n")
        sys.exit(EXIT_USAGE)


def _emit(report, path) -> None:
    doc = report.to_dict()
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
    print(f"problem:    {doc['problem']}")
    print(f"status:     {doc['status']}")
    if report.objective is not None:
        print(f"objective:  {report.objective:.6f}")
        print(f"x:          {np.array2string(report.x, precision=6)}")
        print(f"winner:     rho={report.winner[0]}, lambda={report.winner[1]}")
        worst = max(report.violations, default=0.0)
        print(f"violation:  {worst:.3e}")
    for name, info in report.families.items():
        print(f"model[{name}]: {info['family']} (score {info['score']:.4f})")
    times = ", ".join(f"{k}={v:.2f}s" for k, v in doc["phase_seconds"].items())
    print(f"phases:     {times}")
    print(f"total:      {doc['total_seconds']:.2f}s")


def _run_and_exit(problem, cfg, report_path) -> int:
    try:
        report = solve_global(problem, cfg)
    except InfeasibleApproximation as exc:
        sys.stderr.write(f"surropt: {exc}\n")
        return EXIT_INFEASIBLE
    _emit(report, report_path)
    if report.status == "time_limit":
        return EXIT_TIME_LIMIT
    if report.status == "no_feasible_cell":
        return EXIT_INFEASIBLE
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "solve":
        problem = _load(args.file)
        return _run_and_exit(problem, _config_from_args(args), args.report)
    if args.command == "bench":
        if args.name == "illustrative":
            problem = benchmarks.illustrative_problem()
        elif args.name == "speed-reducer":
            problem = benchmarks.speed_reducer_problem()
        else:
            problem = generate_quadratic_sigmoid(args.n, args.m, seed=args.seed)
        return _run_and_exit(problem, _config_from_args(args), args.report)
    if args.command == "export-lp":
        problem = _load(args.file)
        cfg = _config_from_args(args)
        sp = standardize(problem)
        # training pass identical to solve_global, then the unrelaxed model
        from .driver import _sample_constraint, _sample_objective, _train_plans
        from .model import NonlinearObjective

        seq = np.random.SeedSequence(cfg.seed)
        streams = seq.spawn(len(sp.nonlinear) + 1)
        datasets = [
            _sample_constraint(sp, con, cfg, np.random.default_rng(streams[i]))
            for i, con in enumerate(sp.nonlinear)
        ]
        plans, _ = _train_plans(sp, datasets, cfg, {"training": 0})
        objective_surrogate = None
        if isinstance(sp.objective, NonlinearObjective):
            from .learners import select_surrogate
            from dataclasses import replace as _replace

            support, points, values = _sample_objective(sp, cfg, np.random.default_rng(streams[-1]))
            objective_surrogate = _replace(
                select_surrogate(points, values, task="regressor", seed=cfg.seed + 9973, params=cfg.learner),
                support=tuple(support), constraint_id="objective",
            )
        plan_args = [p.surrogate if p.kind == "surrogate" else p.kind for p in plans]
        model = assemble(sp, plan_args, objective_surrogate)
        milp.export_lp_file(model, args.out)
        print(f"wrote {model.n_vars} variables, {model.n_rows} rows to {args.out}")
        return EXIT_OK
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
