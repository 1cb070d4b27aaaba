"""Command line entry point.

Subcommands: solve | optimize | check | approx-study | mollifier-study.
Exit codes: 0 success / all requested checks pass, 1 solver or config
failure, 2 stationarity failure, 3 implication inconsistency.
"""

import argparse
import json
import sys
from pathlib import Path

from .config import parse_config
from .errors import (ConfigError, ConvergenceError, NetworkParseError,
                     ParameterError, TruncationExceeded)
from .grid import write_csv
from .statesolve import solve_state
from .studies import (_control_field, run_approx_study, run_mollifier_study,
                      run_pipeline)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="relupde",
        description="Optimal control of semilinear PDEs with nonsmooth "
                    "ReLU-network nonlinearities")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
            ("solve", "solve the nonsmooth state equation at a configured control"),
            ("optimize", "run mollified path-following to a candidate stationary triple"),
            ("check", "optimize, then verify the stationarity systems (CI exit codes)"),
            ("approx-study", "network-approximation transfer study"),
            ("mollifier-study", "mollified-slope limits at the kinks")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="TOML problem/experiment file")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="seed (overrides config)")
        p.add_argument("--verbose", action="store_true")
    return parser


def _cmd_solve(problem, cfg, out):
    u = _control_field(problem.grid, cfg.solve_control, cfg.base_dir)
    result = solve_state(problem, u)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(result.y, out / "y.csv")
    meta = {
        "iterations": result.iterations,
        "final_residual": result.final_residual,
        "linf_bound_used": result.linf_bound_used,
        "warnings": list(result.warnings),
    }
    (out / "solve.json").write_text(json.dumps(meta, indent=2) + "\n")
    if cfg.verbose:
        print(json.dumps({"trace": list(result.trace)}))
    return 0


def _cmd_optimize(problem, cfg, out):
    report, _, result = run_pipeline(problem, cfg, out)
    if cfg.verbose:
        print(json.dumps({"inner_iterations": result.inner_iterations,
                          "vi_residuals": result.vi_residuals,
                          "cauchy_increments": result.cauchy_increments,
                          "warnings": list(result.warnings)}))
    return 0


def _cmd_check(problem, cfg, out):
    report, code, result = run_pipeline(problem, cfg, out)
    if cfg.verbose:
        print(report.to_json())
    else:
        verdicts = " ".join(f"{k}={v}" for k, v in report.verdicts.items())
        print(verdicts)
        for line in report.inconsistencies:
            print(f"inconsistency: {line}")
    return code


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        problem, cfg = parse_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.verbose:
            cfg.verbose = True
        out = Path(args.out) if args.out is not None else Path(cfg.out_dir)
        if args.command == "solve":
            return _cmd_solve(problem, cfg, out)
        if args.command == "optimize":
            return _cmd_optimize(problem, cfg, out)
        if args.command == "check":
            return _cmd_check(problem, cfg, out)
        if args.command == "approx-study":
            path = run_approx_study(problem, cfg, out, seed=cfg.seed)
            if cfg.verbose:
                print(str(path))
            return 0
        if args.command == "mollifier-study":
            path = run_mollifier_study(problem.nl, cfg, out, seed=cfg.seed,
                                       grid_label="x".join(str(n) for n in problem.grid.shape))
            if cfg.verbose:
                print(str(path))
            return 0
        raise AssertionError(f"unhandled command {args.command}")
    except (ConfigError, NetworkParseError, ParameterError, ConvergenceError,
            TruncationExceeded, OSError) as exc:
        print(f"relupde: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
