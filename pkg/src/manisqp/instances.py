"""Benchmark problem families: low-rank matrix completion and balanced cut.

Completion: a rank-p matrix A >= 0 is sampled, half of its entries are
declared observed, half of the observed ones are pinned to exact equality,
and the remaining unobserved entries carry nonnegativity constraints.  The
variable lives on the rank-p manifold:

    min 0.5 * || P_fit(X - A) ||_F^2
    s.t. X_ij >= 0 on the unobserved set, X_ij = A_ij on the pinned set.

Balanced cut: given the Laplacian L of a random graph, columns of X on the
oblique manifold relax the indicator vectors of a vertex partition:

    min -1/4 tr(X^T L X)   s.t.  X^T e = 0,   diag(X X^T) = e.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .manifolds import FixedRank, ManifoldPoint, Oblique, RankDropError
from .problem import Multipliers, Problem, SmoothFunction, constraint_values
from .solver import IterateState, QpInfeasibleError, SolverConfig, StallError, step

__all__ = [
    "CompletionInstance",
    "CutInstance",
    "gen_completion",
    "gen_balanced_cut",
    "completion_problem",
    "cut_problem",
    "feasible_start",
    "random_cut_start",
    "instance_to_dict",
    "instance_from_dict",
]

_SALT_INSTANCE = 0x1A
_SALT_START = 0x2B
_SALT_FEAS = 0x3C


def _readonly(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


def _instance_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((int(seed), _SALT_INSTANCE)))


@dataclass(frozen=True, eq=False)
class CompletionInstance:
    q: int
    s: int
    p: int
    seed: int
    a: np.ndarray
    observed: tuple[tuple[int, int], ...]
    pinned: tuple[tuple[int, int], ...]

    @property
    def manifold(self) -> FixedRank:
        return FixedRank(self.q, self.s, self.p)

    @property
    def fit_set(self) -> tuple[tuple[int, int], ...]:
        pinned = set(self.pinned)
        return tuple(ij for ij in self.observed if ij not in pinned)

    @property
    def unknown(self) -> tuple[tuple[int, int], ...]:
        observed = set(self.observed)
        return tuple(
            (i, j) for i in range(self.q) for j in range(self.s) if (i, j) not in observed
        )


def gen_completion(q: int, s: int, p: int, seed: int) -> CompletionInstance:
    """Sample a completion instance; deterministic in (q, s, p, seed).

    A is a product of two uniform[0, 1) factors, resampled until its rank
    is exactly p.  |observed| = ceil(qs / 2) and |pinned| = ceil(|observed| / 2).
    """
    if not 1 <= p <= min(q, s):
        raise ValueError("need 1 <= p <= min(q, s)")
    rng = _instance_rng(seed)
    while True:
        a = rng.random((q, p)) @ rng.random((p, s))
        if np.linalg.matrix_rank(a) == p:
            break
    total = q * s
    n_obs = math.ceil(total / 2)
    flat = rng.permutation(total)[:n_obs]
    observed = tuple(sorted((int(f) // s, int(f) % s) for f in flat))
    n_pin = math.ceil(n_obs / 2)
    pick = rng.permutation(n_obs)[:n_pin]
    pinned = tuple(sorted(observed[int(i)] for i in pick))
    return CompletionInstance(q=q, s=s, p=p, seed=seed, a=_readonly(a), observed=observed, pinned=pinned)


def _entry_constraint(i: int, j: int, shape: tuple[int, int], sign: float, offset: float) -> SmoothFunction:
    """Affine scalar sign * X_ij + offset as a SmoothFunction."""
    grad = np.zeros(shape)
    grad[i, j] = sign
    grad = _readonly(grad)
    return SmoothFunction(
        value=lambda x, i=i, j=j, sign=sign, offset=offset: sign * x[i, j] + offset,
        gradient=lambda x, g=grad: g,
        hess_vec=lambda x, v: np.zeros(v.shape),
    )


def completion_problem(inst: CompletionInstance) -> Problem:
    mask = np.zeros((inst.q, inst.s))
    for i, j in inst.fit_set:
        mask[i, j] = 1.0
    mask = _readonly(mask)
    a = inst.a

    objective = SmoothFunction(
        value=lambda x: 0.5 * float(np.sum(mask * (x - a) ** 2)),
        gradient=lambda x: mask * (x - a),
        hess_vec=lambda x, v: mask * v,
    )
    ineqs = tuple(
        _entry_constraint(i, j, (inst.q, inst.s), -1.0, 0.0) for i, j in inst.unknown
    )
    eqs = tuple(
        _entry_constraint(i, j, (inst.q, inst.s), 1.0, -float(a[i, j])) for i, j in inst.pinned
    )
    return Problem(
        manifold=inst.manifold,
        objective=objective,
        inequalities=ineqs,
        equalities=eqs,
        name=f"completion-q{inst.q}-s{inst.s}-p{inst.p}-seed{inst.seed}",
    )


@dataclass(frozen=True, eq=False)
class CutInstance:
    q: int
    s: int
    density: float
    seed: int
    laplacian: np.ndarray

    @property
    def manifold(self) -> Oblique:
        return Oblique(self.q, self.s)


def gen_balanced_cut(q: int, s: int, density: float, seed: int) -> CutInstance:
    """Laplacian of a random graph with independent edge probability `density`."""
    if not 0.0 <= density <= 1.0:
        raise ValueError("density must lie in [0, 1]")
    rng = _instance_rng(seed)
    w = np.zeros((q, q))
    upper = np.triu(rng.random((q, q)) < density, k=1)
    w[upper] = 1.0
    w = w + w.T
    lap = np.diag(w.sum(axis=1)) - w
    return CutInstance(q=q, s=s, density=density, seed=seed, laplacian=_readonly(lap))


def cut_problem(inst: CutInstance) -> Problem:
    lap = inst.laplacian
    q, s = inst.q, inst.s

    objective = SmoothFunction(
        value=lambda x: -0.25 * float(np.sum(x * (lap @ x))),
        gradient=lambda x: -0.5 * (lap @ x),
        hess_vec=lambda x, v: -0.5 * (lap @ v),
    )

    def column_sum(j: int) -> SmoothFunction:
        grad = np.zeros((q, s))
        grad[:, j] = 1.0
        grad = _readonly(grad)
        return SmoothFunction(
            value=lambda x, j=j: float(np.sum(x[:, j])),
            gradient=lambda x, g=grad: g,
            hess_vec=lambda x, v: np.zeros(v.shape),
        )

    eqs = tuple(column_sum(j) for j in range(s))
    return Problem(
        manifold=inst.manifold,
        objective=objective,
        equalities=eqs,
        name=f"balanced-cut-q{q}-s{s}-d{inst.density}-seed{inst.seed}",
    )


def random_cut_start(inst: CutInstance) -> ManifoldPoint:
    rng = np.random.default_rng(np.random.SeedSequence((int(inst.seed), _SALT_START)))
    return inst.manifold.random_array(rng)


def instance_to_dict(inst) -> dict:
    """JSON-ready dict with dense matrices as nested lists, index sets explicit."""
    if isinstance(inst, CompletionInstance):
        return {
            "problem": "completion",
            "q": inst.q,
            "s": inst.s,
            "p": inst.p,
            "seed": inst.seed,
            "a": inst.a.tolist(),
            "observed": [list(ij) for ij in inst.observed],
            "pinned": [list(ij) for ij in inst.pinned],
        }
    if isinstance(inst, CutInstance):
        return {
            "problem": "balanced_cut",
            "q": inst.q,
            "s": inst.s,
            "density": inst.density,
            "seed": inst.seed,
            "laplacian": inst.laplacian.tolist(),
        }
    raise TypeError(f"unknown instance type: {type(inst).__name__}")


def instance_from_dict(d: dict):
    kind = d.get("problem")
    if kind == "completion":
        return CompletionInstance(
            q=int(d["q"]),
            s=int(d["s"]),
            p=int(d["p"]),
            seed=int(d["seed"]),
            a=_readonly(np.array(d["a"], dtype=float)),
            observed=tuple(sorted((int(i), int(j)) for i, j in d["observed"])),
            pinned=tuple(sorted((int(i), int(j)) for i, j in d["pinned"])),
        )
    if kind == "balanced_cut":
        return CutInstance(
            q=int(d["q"]),
            s=int(d["s"]),
            density=float(d["density"]),
            seed=int(d["seed"]),
            laplacian=_readonly(np.array(d["laplacian"], dtype=float)),
        )
    raise ValueError(f"unknown problem kind: {kind!r}")


def _max_violation(prob: Problem, x: ManifoldPoint) -> float:
    g, h = constraint_values(prob, x)
    out = 0.0
    if g.size:
        out = max(out, float(np.max(np.maximum(g, 0.0))))
    if h.size:
        out = max(out, float(np.max(np.abs(h))))
    return out


def feasible_start(
    inst: CompletionInstance,
    tol: float = 1e-2,
    x0: ManifoldPoint | None = None,
    max_iter: int = 200,
) -> ManifoldPoint:
    """A rank-p point whose constraint violation is at most tol.

    Runs the SQP iteration on the pure feasibility problem (zero objective,
    same constraints) from a random rank-p start, stopping as soon as the
    largest violation drops to tol.  An explicit ``x0`` that already meets
    tol is returned untouched.  A random start can linearize the constraints
    infeasibly or stall; the phase then restarts from a fresh seeded point,
    with all attempts sharing the ``max_iter`` step budget.  Raises
    RuntimeError when the budget runs out before reaching tol.
    """
    man = inst.manifold
    zero = SmoothFunction(
        value=lambda x: 0.0,
        gradient=lambda x: np.zeros(x.shape),
        hess_vec=lambda x, v: np.zeros(v.shape),
    )
    prob = completion_problem(inst)
    feas = Problem(
        manifold=man,
        objective=zero,
        inequalities=prob.inequalities,
        equalities=prob.equalities,
        name=prob.name + "-feasibility",
    )
    if x0 is not None and _max_violation(feas, x0) <= tol:
        return x0

    budget = max_iter
    attempt = 0
    while budget > 0 and attempt < 32:
        if x0 is None:
            rng = np.random.default_rng(
                np.random.SeedSequence((int(inst.seed), _SALT_FEAS, attempt))
            )
            x0 = man.random_array(rng)
            if _max_violation(feas, x0) <= tol:
                return x0
        seed_int = int(
            np.random.SeedSequence((int(inst.seed), _SALT_FEAS, attempt, 1)).generate_state(1)[0]
        )
        cfg = SolverConfig(residual_tol=0.0, seed=seed_int)
        state = IterateState(x=x0, eta=Multipliers.zeros(feas.m, feas.n), rho=cfg.rho_init, k=0)
        try:
            while budget > 0:
                state, _ = step(feas, state, cfg)
                budget -= 1
                if _max_violation(feas, state.x) <= tol:
                    return state.x
        except (QpInfeasibleError, RankDropError, StallError):
            pass  # restart from a fresh random point
        x0 = None
        attempt += 1
    raise RuntimeError(f"feasibility phase did not reach violation {tol} in {max_iter} iterations")
