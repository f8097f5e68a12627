"""Command-line entry points.

Five subcommands share one config format: `simulate` (forward solve and
trajectory export), `assimilate` (full twin experiment), `gradcheck`
(finite-difference diagnostics), `kkt` (first-order check of a saved
state) and `ssc` (second-order report for a saved state).

Exit codes: 0 success, 2 config problems, 3 runtime failures.  Every
failure writes a single-line JSON object to stderr with at least `kind`
and `message` fields.
"""

import argparse
import json
import os
import sys

import numpy as np

from .checks import gradient_check, hessian_check, random_direction, taylor_slopes
from .config import load_config
from .errors import AssimilationError, GradCheckError
from .optimize import kkt_check, ssc_check
from .stepping import solve_semilinear
from .twin import (
    _time_grid,
    build_grid_operator,
    build_nonlinearity,
    build_problem,
    export_results,
    export_trajectory,
    load_vector,
    run_assimilation,
    truth_field,
)

_GRADIENT_TOL = 1e-5
_HESSIAN_TOL = 1e-4
_SLOPE_FIRST = (2.0, 0.1)
_SLOPE_SECOND = (3.0, 0.15)


def _add_common(parser, need_out):
    parser.add_argument("--config", required=True, help="path to the JSON config")
    parser.add_argument(
        "--out",
        required=need_out,
        default=None,
        help="output directory" + ("" if need_out else " (optional)"),
    )
    parser.add_argument(
        "--seed", type=int, default=None, help="master seed overriding config seeds"
    )
    parser.add_argument(
        "--format", choices=("csv", "json"), default="csv", help="data file format"
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pde4dvar",
        description="Variational assimilation of parabolic PDE initial conditions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_common(sub.add_parser("simulate", help="forward solve the truth"), True)
    _add_common(sub.add_parser("assimilate", help="run the twin experiment"), True)
    _add_common(sub.add_parser("gradcheck", help="finite-difference diagnostics"), False)
    kkt = sub.add_parser("kkt", help="first-order check of a saved state")
    _add_common(kkt, False)
    kkt.add_argument("--state", required=True, help="saved node vector to check")
    ssc = sub.add_parser("ssc", help="second-order report for a saved state")
    _add_common(ssc, False)
    ssc.add_argument("--state", required=True, help="saved node vector to check")
    return parser


def _load(args):
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_master_seed(args.seed)
    return config


def _cmd_simulate(args) -> int:
    config = _load(args)
    grid, operator = build_grid_operator(config)
    time_grid = _time_grid(config)
    g = build_nonlinearity(config.nonlinearity)
    truth = truth_field(grid, config.truth)
    trajectory = solve_semilinear(operator, time_grid, truth, g)
    os.makedirs(args.out, exist_ok=True)
    ext = "json" if args.format == "json" else "csv"
    path = os.path.join(args.out, f"trajectory.{ext}")
    export_trajectory(time_grid, trajectory, path, args.format)
    print(
        f"simulated {time_grid.n_steps} steps on {grid.node_count} nodes -> {path}"
    )
    return 0


def _cmd_assimilate(args) -> int:
    config = _load(args)
    result = run_assimilation(config)
    export_results(result, args.out, args.format)
    timings = " ".join(f"{k}={v:.3f}s" for k, v in result.timings.items())
    print(f"phase timings: {timings}")
    print(
        "converged={0} reason={1} cost={2:.6e} l2_error={3:.6e}".format(
            result.history.converged,
            result.history.reason,
            result.cost_parts.total,
            result.l2_error,
        )
    )
    print(f"results written to {args.out}")
    return 0


def _slope_row(name, slope, target):
    center, width = target
    ok = abs(slope - center) <= width
    return (name, "4", f"{slope:.4f}", f"{center} +/- {width}", ok)


def _cmd_gradcheck(args) -> int:
    config = _load(args)
    problem, _ = build_problem(config)
    rng = np.random.default_rng(config.optimizer.seed)
    grad_errors = gradient_check(problem, rng, n_pairs=20)
    hess_errors = hessian_check(problem, rng, n_pairs=10)
    rows = [
        (
            "gradient_fd",
            str(grad_errors.size),
            f"{grad_errors.max():.3e}",
            f"{_GRADIENT_TOL:.1e}",
            bool(grad_errors.max() <= _GRADIENT_TOL),
        ),
        (
            "hessian_fd",
            str(hess_errors.size),
            f"{hess_errors.max():.3e}",
            f"{_HESSIAN_TOL:.1e}",
            bool(hess_errors.max() <= _HESSIAN_TOL),
        ),
    ]
    if problem.nonlinearity.is_zero:
        rows.append(("tangent_slope", "-", "n/a (linear model)", "-", True))
        rows.append(("curvature_slope", "-", "n/a (linear model)", "-", True))
    else:
        u = problem.background.copy()
        h = random_direction(problem, rng)
        s1, s2 = taylor_slopes(problem, u, h)
        rows.append(_slope_row("tangent_slope", s1, _SLOPE_FIRST))
        rows.append(_slope_row("curvature_slope", s2, _SLOPE_SECOND))
    header = f"{'check':<18}{'pairs':>6}  {'max_rel_error':<20}{'threshold':<14}status"
    print(header)
    for name, pairs, value, threshold, ok in rows:
        status = "pass" if ok else "FAIL"
        print(f"{name:<18}{pairs:>6}  {value:<20}{threshold:<14}{status}")
    if not all(row[4] for row in rows):
        raise GradCheckError(
            "finite-difference diagnostics exceeded tolerance",
            failed=[row[0] for row in rows if not row[4]],
        )
    return 0


def _cmd_kkt(args) -> int:
    config = _load(args)
    problem, _ = build_problem(config)
    u = load_vector(args.state)
    report = kkt_check(problem, u)
    text = json.dumps(report.to_dict(), sort_keys=True, indent=2)
    print(text)
    if args.out is not None:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "kkt.json"), "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return 0


def _cmd_ssc(args) -> int:
    config = _load(args)
    problem, _ = build_problem(config)
    u = load_vector(args.state)
    report = kkt_check(problem, u)
    ssc = ssc_check(
        problem,
        u,
        report.multiplier,
        n_directions=config.ssc.n_directions,
        seed=config.ssc.seed,
        dense_crosscheck=config.ssc.dense_crosscheck,
    )
    text = json.dumps(ssc.to_dict(), sort_keys=True, indent=2)
    print(text)
    if args.out is not None:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "ssc.json"), "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "assimilate": _cmd_assimilate,
    "gradcheck": _cmd_gradcheck,
    "kkt": _cmd_kkt,
    "ssc": _cmd_ssc,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except AssimilationError as exc:
        sys.stderr.write(json.dumps(exc.payload(), sort_keys=True) + "\n")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
