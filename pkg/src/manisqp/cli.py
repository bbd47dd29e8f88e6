"""Command line entry points: gen, solve, bench."""

from __future__ import annotations

import argparse
import json
import sys

from .instances import (
    completion_problem,
    cut_problem,
    feasible_start,
    gen_balanced_cut,
    gen_completion,
    instance_to_dict,
    random_cut_start,
)
from .problem import Multipliers
from .runner import RunSpec, run, write_trace_csv
from .solver import SolverConfig, solve

# benchmark-calibrated eigenvalue floors, applied when --delta is not given
DEFAULT_DELTA = {"completion": 1e-5, "balanced_cut": 1e-8}
# subproblem certificate tolerances, applied when --qp-tol is not given.  The
# cut floor delta=1e-8 admits steps of norm ~1/delta, whose float64
# stationarity residual cannot sit below roughly eps/delta, so the tighter
# completion default is unattainable there.
DEFAULT_QP_TOL = {"completion": 1e-10, "balanced_cut": 1e-8}

EXIT_CODES = {
    "converged": 0,
    "max_iter": 10,
    "max_time": 11,
    "stalled": 12,
    "qp_infeasible": 13,
    "rank_drop": 14,
}


def _add_instance_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--problem", required=True, choices=("completion", "balanced_cut"))
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--p", type=int, help="rank (completion only)")
    p.add_argument("--density", type=float, help="edge probability (balanced_cut only)")
    p.add_argument("--seed", type=int, default=0)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="manisqp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a problem instance as JSON")
    _add_instance_args(gen)
    gen.add_argument("--out", required=True, help="output JSON path")

    sol = sub.add_parser("solve", help="solve one instance")
    _add_instance_args(sol)
    sol.add_argument("--rho-init", type=float, default=1.0)
    sol.add_argument("--beta", type=float, default=0.9)
    sol.add_argument("--gamma", type=float, default=0.25)
    sol.add_argument("--epsilon", type=float, default=0.5)
    sol.add_argument("--delta", type=float, default=None, help="eigenvalue floor (default per problem)")
    sol.add_argument("--qp-tol", type=float, default=None, help="subproblem certificate tolerance (default per problem)")
    sol.add_argument("--b-strategy", choices=("modified_hessian", "identity"), default="modified_hessian")
    sol.add_argument("--residual-tol", type=float, default=1e-6)
    sol.add_argument("--max-iter", type=int, default=100_000)
    sol.add_argument("--max-time", type=float, default=600.0)
    sol.add_argument("--start-tol", type=float, default=1e-2, help="feasibility phase target (completion)")
    sol.add_argument("--trace", help="write the iteration trace CSV here")
    sol.add_argument(
        "--wall-times",
        action="store_true",
        help="record measured wall times in the trace; by default the time "
        "column is zeroed so repeated runs are byte-identical",
    )

    ben = sub.add_parser("bench", help="run a benchmark batch from a spec file")
    ben.add_argument("--spec", required=True, help="RunSpec JSON path")
    ben.add_argument("--out", required=True, help="output directory")
    return parser


def _check_instance_args(parser, args) -> None:
    if args.problem == "completion" and args.p is None:
        parser.error("--p is required for completion")
    if args.problem == "balanced_cut" and args.density is None:
        parser.error("--density is required for balanced_cut")


def _cmd_gen(parser, args) -> int:
    _check_instance_args(parser, args)
    if args.problem == "completion":
        inst = gen_completion(args.q, args.s, args.p, args.seed)
    else:
        inst = gen_balanced_cut(args.q, args.s, args.density, args.seed)
    with open(args.out, "w") as fh:
        json.dump(instance_to_dict(inst), fh, sort_keys=True)
        fh.write("\n")
    print(f"wrote {args.out}")
    return 0


def _cmd_solve(parser, args) -> int:
    _check_instance_args(parser, args)
    delta = args.delta if args.delta is not None else DEFAULT_DELTA[args.problem]
    qp_tol = args.qp_tol if args.qp_tol is not None else DEFAULT_QP_TOL[args.problem]
    cfg = SolverConfig(
        epsilon=args.epsilon,
        rho_init=args.rho_init,
        beta=args.beta,
        gamma=args.gamma,
        delta=delta,
        qp_tol=qp_tol,
        b_strategy=args.b_strategy,
        residual_tol=args.residual_tol,
        max_iter=args.max_iter,
        max_time=args.max_time,
        seed=args.seed,
    )
    if args.problem == "completion":
        inst = gen_completion(args.q, args.s, args.p, args.seed)
        prob = completion_problem(inst)
        x0 = feasible_start(inst, tol=args.start_tol)
    else:
        inst = gen_balanced_cut(args.q, args.s, args.density, args.seed)
        prob = cut_problem(inst)
        x0 = random_cut_start(inst)

    state, trace = solve(prob, x0, Multipliers.zeros(prob.m, prob.n), cfg)
    if args.trace:
        write_trace_csv(args.trace, trace.records, wall_times=args.wall_times)
    last = trace.records[-1] if trace.records else None
    print(
        f"verdict={trace.verdict} iters={len(trace.records)}"
        + (f" f={last.f:.9e} residual={last.residual:.3e}" if last else "")
    )
    return EXIT_CODES[trace.verdict]


def _cmd_bench(parser, args) -> int:
    with open(args.spec) as fh:
        spec = RunSpec.from_dict(json.load(fh))
    summary, _ = run(spec, args.out)
    print(
        f"wrote {args.out}/summary.json: {summary['successes']}/{summary['trials']} "
        f"converged (ratio {summary['success_ratio']:.2f})"
    )
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command == "gen":
        return _cmd_gen(parser, args)
    if args.command == "solve":
        return _cmd_solve(parser, args)
    return _cmd_bench(parser, args)


if __name__ == "__main__":
    sys.exit(main())
