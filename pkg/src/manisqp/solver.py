"""Sequential quadratic optimization on manifolds.

Each iteration draws a random orthonormal tangent basis, builds a convex
quadratic model of the problem in those coordinates (Lagrangian Hessian
with its eigenvalues floored, or the identity), solves it for a step and a
fresh multiplier estimate, ratchets the exact-penalty parameter so the step
remains a descent direction for the merit function, and backtracks until
the Armijo condition

    gamma * t * <B d, d>  <=  P_rho(x) - P_rho(retract(x, t d))

holds.  A Newton iteration on the KKT system (``newton_kkt_step``) is
provided alongside for local analysis; it shares the basis and Hessian
machinery but keeps the Hessian unmodified and treats all constraints as
equalities.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .manifolds import (
    ManifoldPoint,
    RankDropError,
    TangentBasis,
    orthonormal_basis,
    retract,
)
from .problem import (
    KktReport,
    Multipliers,
    Problem,
    kkt_residual,
    lagrangian_hessian_matrix,
    merit,
)
from .qp import build_subproblem, modify_hessian, solve_qp

__all__ = [
    "SolverConfig",
    "IterateState",
    "IterationRecord",
    "SolveTrace",
    "QpInfeasibleError",
    "StallError",
    "update_penalty",
    "line_search",
    "iteration_seed",
    "step",
    "solve",
    "newton_kkt_step",
]

# Steps with coordinate norm at or below this are treated as a stationary
# subproblem: the run stops with whatever residual the iterate has.
STEP_ZERO_TOL = 1e-14

B_STRATEGIES = ("modified_hessian", "identity")

VERDICTS = ("converged", "max_iter", "max_time", "stalled", "qp_infeasible", "rank_drop")


class QpInfeasibleError(RuntimeError):
    """The linearized subproblem has no feasible point."""


class StallError(RuntimeError):
    """The iteration cannot make further progress."""


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 0.5
    rho_init: float = 1.0
    beta: float = 0.9
    gamma: float = 0.25
    delta: float = 1e-5
    b_strategy: str = "modified_hessian"
    residual_tol: float = 1e-6
    max_iter: int = 100_000
    max_time: float = 600.0
    max_backtracks: int = 200
    seed: int = 0
    qp_tol: float = 1e-10

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.delta <= 0.0:
            raise ValueError("delta must be positive")
        if self.rho_init <= 0.0:
            raise ValueError("rho_init must be positive")
        if self.b_strategy not in B_STRATEGIES:
            raise ValueError(f"b_strategy must be one of {B_STRATEGIES}")
        if self.qp_tol <= 0.0:
            raise ValueError("qp_tol must be positive")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")


@dataclass(frozen=True, eq=False)
class IterateState:
    x: ManifoldPoint
    eta: Multipliers
    rho: float
    k: int


@dataclass(frozen=True, eq=False)
class IterationRecord:
    """One completed iteration.

    The first ten fields mirror the trace CSV schema.  The remaining ones
    are diagnostic: they make the Armijo certificate, its minimality and
    the subproblem certificate re-checkable from a stored trace.
    ``merit_reject`` is the merit at the last rejected trial step (None when
    the full step was accepted); ``stationary`` marks an iteration whose
    subproblem step was numerically zero.
    """

    k: int
    wall_time: float
    f: float
    merit: float
    residual: float
    rho: float
    alpha: float
    step_norm: float
    qp_status: str
    backtracks: int
    merit_prev: float = float("nan")
    merit_reject: float | None = None
    quad_form: float = float("nan")
    qp_kkt_error: float = float("nan")
    report: KktReport | None = None
    stationary: bool = False


@dataclass(eq=False)
class SolveTrace:
    records: list[IterationRecord] = field(default_factory=list)
    verdict: str = "max_iter"


def update_penalty(rho_prev: float, eta_star: Multipliers, epsilon: float) -> float:
    """Ratchet the penalty above the newest multiplier magnitudes.

    With upsilon = max(max_i mu_i, max_j |lam_j|) (0 when there are no
    constraints), returns rho_prev if rho_prev >= upsilon and upsilon +
    epsilon otherwise.  Nondecreasing in successive calls by construction.
    """
    cands = []
    if eta_star.mu.size:
        cands.append(float(np.max(eta_star.mu)))
    if eta_star.lam.size:
        cands.append(float(np.max(np.abs(eta_star.lam))))
    upsilon = max(cands) if cands else 0.0
    if rho_prev >= upsilon:
        return rho_prev
    return upsilon + epsilon


@dataclass(frozen=True, eq=False)
class LineSearchResult:
    alpha: float
    backtracks: int
    x_next: ManifoldPoint
    merit_base: float
    merit_next: float
    merit_reject: float | None


def line_search(prob, x, direction, quad_form, rho, cfg) -> LineSearchResult:
    """Backtracking Armijo search along a retracted ray.

    Finds the smallest r >= 0 with
    gamma * beta^r * quad_form <= P_rho(x) - P_rho(retract(x, beta^r * d)).
    """
    if quad_form <= 0.0:
        raise ValueError("quad_form must be positive")
    base = merit(prob, x, rho)
    reject = None
    for r in range(cfg.max_backtracks + 1):
        t = cfg.beta**r
        x_trial = retract(x, direction.scaled(t))
        m_trial = merit(prob, x_trial, rho)
        if base - m_trial >= cfg.gamma * t * quad_form:
            return LineSearchResult(t, r, x_trial, base, m_trial, reject)
        reject = m_trial
    raise StallError(f"no acceptable step within {cfg.max_backtracks} backtracks")


def iteration_seed(seed: int, k: int) -> np.random.SeedSequence:
    """Seed for the tangent basis of iteration k of a run seeded by `seed`."""
    return np.random.SeedSequence((int(seed), 0xB5, int(k)))


def step(prob: Problem, state: IterateState, cfg: SolverConfig, clock_origin: float | None = None):
    """One full iteration.  Returns (next state, record).

    Raises QpInfeasibleError, StallError or RankDropError when the run
    cannot continue; the driver maps these onto verdicts.
    """
    t0 = time.perf_counter() if clock_origin is None else clock_origin
    x, eta, k = state.x, state.eta, state.k
    basis = orthonormal_basis(x, iteration_seed(cfg.seed, k))

    if cfg.b_strategy == "modified_hessian":
        hl = lagrangian_hessian_matrix(prob, x, eta, basis)
        if not np.all(np.isfinite(hl)):
            raise StallError("Lagrangian Hessian has nonfinite entries")
        b = modify_hessian(hl, cfg.delta)
    else:
        b = np.eye(len(basis))

    model = build_subproblem(prob, x, basis, b)
    sol = solve_qp(model, cfg.qp_tol)
    if sol.status == "infeasible":
        raise QpInfeasibleError(f"subproblem infeasible at iteration {k}")
    if sol.status != "optimal":
        raise StallError(f"subproblem solver failed to certify at iteration {k}")
    if not np.all(np.isfinite(sol.eta.mu)) or not np.all(np.isfinite(sol.eta.lam)):
        raise StallError("subproblem multipliers are nonfinite")

    d_hat = sol.d
    step_norm = float(np.linalg.norm(d_hat))
    eta_next = sol.eta
    rho = update_penalty(state.rho, sol.eta, cfg.epsilon)
    quad_form = float(d_hat @ b @ d_hat)

    if step_norm <= STEP_ZERO_TOL:
        report = kkt_residual(prob, x, eta_next)
        m_here = merit(prob, x, rho)
        record = IterationRecord(
            k=k,
            wall_time=round(time.perf_counter() - t0, 6),
            f=float(prob.objective.value(x.ambient)),
            merit=m_here,
            residual=report.residual,
            rho=rho,
            alpha=0.0,
            step_norm=step_norm,
            qp_status=sol.status,
            backtracks=0,
            merit_prev=m_here,
            merit_reject=None,
            quad_form=quad_form,
            qp_kkt_error=sol.kkt_error,
            report=report,
            stationary=True,
        )
        return IterateState(x, eta_next, rho, k + 1), record

    direction = basis.from_coords(d_hat)
    ls = line_search(prob, x, direction, quad_form, rho, cfg)
    report = kkt_residual(prob, ls.x_next, eta_next)
    record = IterationRecord(
        k=k,
        wall_time=round(time.perf_counter() - t0, 6),
        f=float(prob.objective.value(ls.x_next.ambient)),
        merit=ls.merit_next,
        residual=report.residual,
        rho=rho,
        alpha=ls.alpha,
        step_norm=step_norm,
        qp_status=sol.status,
        backtracks=ls.backtracks,
        merit_prev=ls.merit_base,
        merit_reject=ls.merit_reject,
        quad_form=quad_form,
        qp_kkt_error=sol.kkt_error,
        report=report,
    )
    return IterateState(ls.x_next, eta_next, rho, k + 1), record


def _state_unchanged(a: IterateState, b: IterateState) -> bool:
    return (
        np.array_equal(a.x.ambient, b.x.ambient)
        and a.rho == b.rho
        and np.array_equal(a.eta.mu, b.eta.mu)
        and np.array_equal(a.eta.lam, b.eta.lam)
    )


def solve(prob: Problem, x0: ManifoldPoint, eta0: Multipliers | None = None, cfg: SolverConfig | None = None):
    """Run the iteration from (x0, eta0) until a verdict is reached.

    Returns (final IterateState, SolveTrace).  Verdicts: "converged" when
    the KKT residual fell to cfg.residual_tol, otherwise "max_iter",
    "max_time", "stalled", "qp_infeasible" or "rank_drop".
    """
    cfg = cfg if cfg is not None else SolverConfig()
    eta = eta0 if eta0 is not None else Multipliers.zeros(prob.m, prob.n)
    if eta.mu.shape != (prob.m,) or eta.lam.shape != (prob.n,):
        raise ValueError("initial multipliers do not match the problem")

    state = IterateState(x=x0, eta=eta, rho=cfg.rho_init, k=0)
    trace = SolveTrace(records=[], verdict="max_iter")
    t0 = time.perf_counter()

    for _ in range(cfg.max_iter):
        # budget check reuses the previous iteration's clock sample
        elapsed = trace.records[-1].wall_time if trace.records else 0.0
        if elapsed > cfg.max_time:
            trace.verdict = "max_time"
            return state, trace
        try:
            state_next, record = step(prob, state, cfg, clock_origin=t0)
        except QpInfeasibleError:
            trace.verdict = "qp_infeasible"
            return state, trace
        except RankDropError:
            trace.verdict = "rank_drop"
            return state, trace
        except StallError:
            trace.verdict = "stalled"
            return state, trace
        trace.records.append(record)
        if record.stationary:
            trace.verdict = "converged" if record.residual <= cfg.residual_tol else "stalled"
            return state_next, trace
        if record.residual <= cfg.residual_tol:
            trace.verdict = "converged"
            return state_next, trace
        if _state_unchanged(state, state_next):
            trace.verdict = "stalled"
            return state_next, trace
        state = state_next

    trace.verdict = "max_iter"
    return state, trace


def newton_kkt_step(prob: Problem, x: ManifoldPoint, eta: Multipliers, basis: TangentBasis):
    """One Newton iteration on the KKT system in basis coordinates.

    All constraints are kept as equalities and the Lagrangian Hessian enters
    unmodified, so this is the local method the globalized iteration is
    expected to track near a regular solution.  Returns (x_next, eta_next).
    Raises numpy.linalg.LinAlgError when the KKT matrix is singular, which
    signals a constraint-qualification or second-order failure at x.
    """
    d = len(basis)
    m, n = prob.m, prob.n
    hl = lagrangian_hessian_matrix(prob, x, eta, basis)
    model = build_subproblem(prob, x, basis, hl)
    g = -model.b_ineq
    h = -model.b_eq

    size = d + m + n
    kkt = np.zeros((size, size))
    kkt[:d, :d] = hl
    if m:
        kkt[:d, d : d + m] = model.A_ineq.T
        kkt[d : d + m, :d] = model.A_ineq
    if n:
        kkt[:d, d + m :] = model.A_eq.T
        kkt[d + m :, :d] = model.A_eq

    grad_l = model.c.copy()
    if m:
        grad_l += model.A_ineq.T @ eta.mu
    if n:
        grad_l += model.A_eq.T @ eta.lam
    rhs = -np.concatenate([grad_l, g, h])

    try:
        # the residual check below vets the solution, so let near-singular
        # factorizations produce inf/nan quietly instead of warning
        with np.errstate(divide="ignore", invalid="ignore"):
            z = scipy.linalg.solve(kkt, rhs)
    except scipy.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            "singular KKT matrix: constraint qualification or second-order "
            "conditions fail at this point"
        ) from exc
    with np.errstate(invalid="ignore"):
        res = np.linalg.norm(kkt @ z - rhs)
        scale = 1.0 + np.linalg.norm(rhs) + np.linalg.norm(kkt, ord="fro") * np.linalg.norm(z)
    if not np.all(np.isfinite(z)) or res > 1e-8 * scale:
        raise np.linalg.LinAlgError(
            "singular KKT matrix: constraint qualification or second-order "
            "conditions fail at this point"
        )

    x_next = retract(x, basis.from_coords(z[:d]))
    eta_next = Multipliers(eta.mu + z[d : d + m], eta.lam + z[d + m :])
    return x_next, eta_next
