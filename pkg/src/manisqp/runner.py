"""Batch experiment runner: seeded trials, trace CSVs, summary JSON.

A RunSpec names a problem family, its sizes, a trial count and the solver
configuration.  ``run`` executes the trials sequentially with per-trial
derived seeds, writes one trace CSV per trial plus a ``decades.csv`` with
the first wall time at which the residual crossed each power of ten, and a
``summary.json`` with the success ratio and means over successful trials.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .instances import (
    cut_problem,
    completion_problem,
    feasible_start,
    gen_balanced_cut,
    gen_completion,
    random_cut_start,
)
from .problem import Multipliers
from .solver import SolverConfig, solve

__all__ = ["RunSpec", "run", "write_trace_csv", "decade_crossings", "TRACE_COLUMNS"]

TRACE_COLUMNS = (
    "iter",
    "time_s",
    "f",
    "merit",
    "residual",
    "rho",
    "alpha",
    "step_norm",
    "backtracks",
    "qp_status",
)

# Residual decade thresholds reported per trial: 10^1 down to 10^-13.
DECADE_EXPONENTS = tuple(range(1, -14, -1))

_SALT_TRIAL = 0x7D


@dataclass(frozen=True)
class RunSpec:
    problem: str  # "completion" | "balanced_cut"
    q: int
    s: int
    p: int | None = None
    density: float | None = None
    trials: int = 1
    seed: int = 0
    start_tol: float = 1e-2
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.problem not in ("completion", "balanced_cut"):
            raise ValueError("problem must be 'completion' or 'balanced_cut'")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.problem == "completion" and self.p is None:
            raise ValueError("completion needs p")
        if self.problem == "balanced_cut" and self.density is None:
            raise ValueError("balanced_cut needs density")

    @staticmethod
    def from_dict(d: dict) -> "RunSpec":
        d = dict(d)
        solver = SolverConfig(**d.pop("solver", {}))
        return RunSpec(solver=solver, **d)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        return out


def trial_seed(base_seed: int, trial: int) -> int:
    ss = np.random.SeedSequence((int(base_seed), _SALT_TRIAL, int(trial)))
    return int(ss.generate_state(1)[0])


def write_trace_csv(path, records, wall_times: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for r in records:
            t = r.wall_time if wall_times else 0.0
            w.writerow(
                [
                    r.k,
                    f"{t:.6f}",
                    repr(float(r.f)),
                    repr(float(r.merit)),
                    repr(float(r.residual)),
                    repr(float(r.rho)),
                    repr(float(r.alpha)),
                    repr(float(r.step_norm)),
                    r.backtracks,
                    r.qp_status,
                ]
            )


def decade_crossings(records) -> dict[int, float]:
    """First wall time at which the residual reached each decade threshold."""
    out: dict[int, float] = {}
    for e in DECADE_EXPONENTS:
        thr = 10.0**e
        for r in records:
            if r.residual <= thr:
                out[e] = r.wall_time
                break
    return out


def _run_trial(spec: RunSpec, trial: int):
    iseed = trial_seed(spec.seed, trial)
    cfg = dataclasses.replace(spec.solver, seed=iseed)
    if spec.problem == "completion":
        inst = gen_completion(spec.q, spec.s, spec.p, iseed)
        prob = completion_problem(inst)
        x0 = feasible_start(inst, tol=spec.start_tol)
    else:
        inst = gen_balanced_cut(spec.q, spec.s, spec.density, iseed)
        prob = cut_problem(inst)
        x0 = random_cut_start(inst)
    state, trace = solve(prob, x0, Multipliers.zeros(prob.m, prob.n), cfg)
    return iseed, state, trace


def run(spec: RunSpec, out_dir: str):
    """Execute all trials and write artifacts.

    Returns (summary dict, list of per-trial SolveTrace).  The traces carry
    the diagnostic fields that the fixed CSV schema drops, so callers can
    audit Armijo and subproblem certificates without re-running.
    """
    os.makedirs(out_dir, exist_ok=True)
    seeds: list[int] = []
    traces = []
    successes = 0
    times: list[float] = []
    iters: list[int] = []
    all_crossings: list[dict[int, float]] = []

    for t in range(spec.trials):
        iseed, state, trace = _run_trial(spec, t)
        seeds.append(iseed)
        traces.append(trace)
        write_trace_csv(os.path.join(out_dir, f"trial_{t:03d}.csv"), trace.records, wall_times=True)
        all_crossings.append(decade_crossings(trace.records))
        elapsed = trace.records[-1].wall_time if trace.records else 0.0
        if trace.verdict == "converged" and elapsed <= spec.solver.max_time:
            successes += 1
            times.append(elapsed)
            iters.append(len(trace.records))

    with open(os.path.join(out_dir, "decades.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "decade", "time_s"])
        for t, crossings in enumerate(all_crossings):
            for e in DECADE_EXPONENTS:
                cell = f"{crossings[e]:.6f}" if e in crossings else ""
                w.writerow([t, e, cell])

    summary = {
        "problem": spec.problem,
        "params": {
            "q": spec.q,
            "s": spec.s,
            "p": spec.p,
            "density": spec.density,
            "start_tol": spec.start_tol,
            "solver": dataclasses.asdict(spec.solver),
        },
        "trials": spec.trials,
        "successes": successes,
        "success_ratio": successes / spec.trials,
        "mean_time_s": (sum(times) / len(times)) if times else None,
        "mean_iters": (sum(iters) / len(iters)) if iters else None,
        "seeds": seeds,
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary, traces
