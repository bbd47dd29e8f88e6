"""Convex quadratic subproblems in tangent-space coordinates.

The model is

    min_d  (1/2) d^T H d + c^T d
    s.t.   A_ineq d <= b_ineq,   A_eq d = b_eq,

with H symmetric positive definite.  ``solve_qp`` certifies its answer
against the KKT conditions of this model and never reports "optimal"
without the certificate holding to the requested tolerance.

Two routes are used internally: problems without inequality rows reduce to
a single saddle-point solve (null-space method with one refinement pass),
everything else goes through a Mehrotra-style predictor-corrector interior
point iteration on the slack form.  Infeasibility is decided by an elastic
phase-1 linear program that minimizes the total constraint violation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import linprog

from .manifolds import ManifoldPoint, TangentBasis
from .problem import Multipliers, Problem, constraint_values

__all__ = [
    "QpModel",
    "QpSolution",
    "modify_hessian",
    "build_subproblem",
    "solve_qp",
    "kkt_violation",
]

SYMMETRY_TOL = 1e-8
# Minimal linearized-constraint violation above which a subproblem is
# declared infeasible by the phase-1 check.
INFEASIBILITY_TOL = 1e-8
# Negative inequality multipliers in [-MU_CLAMP, 0) are rounded to zero on
# extraction; anything more negative is a solver bug, not roundoff.
MU_CLAMP = 1e-10

_IPM_MAX_ITER = 100


def _readonly(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class QpModel:
    """Data of one tangent-space subproblem (see module docstring)."""

    H: np.ndarray
    c: np.ndarray
    A_ineq: np.ndarray
    b_ineq: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.c, dtype=float).size
        object.__setattr__(self, "H", _readonly(np.asarray(self.H, dtype=float).reshape(d, d)))
        object.__setattr__(self, "c", _readonly(np.asarray(self.c, dtype=float).reshape(d)))
        ai = np.asarray(self.A_ineq, dtype=float).reshape(-1, d)
        ae = np.asarray(self.A_eq, dtype=float).reshape(-1, d)
        object.__setattr__(self, "A_ineq", _readonly(ai))
        object.__setattr__(self, "b_ineq", _readonly(np.asarray(self.b_ineq, dtype=float).reshape(ai.shape[0])))
        object.__setattr__(self, "A_eq", _readonly(ae))
        object.__setattr__(self, "b_eq", _readonly(np.asarray(self.b_eq, dtype=float).reshape(ae.shape[0])))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.c.size, self.b_ineq.size, self.b_eq.size

    def dump(self, stream) -> None:
        """Write the model in a self-describing text matrix format.

        Each block is ``name rows cols`` followed by ``rows`` lines of
        ``cols`` space-separated float reprs.
        """
        d, m, n = self.dims
        stream.write(f"# qp model d={d} m={m} n={n}\n")
        blocks = [
            ("H", self.H),
            ("c", self.c.reshape(1, -1)),
            ("A_ineq", self.A_ineq),
            ("b_ineq", self.b_ineq.reshape(1, -1)),
            ("A_eq", self.A_eq),
            ("b_eq", self.b_eq.reshape(1, -1)),
        ]
        for name, arr in blocks:
            stream.write(f"{name} {arr.shape[0]} {arr.shape[1]}\n")
            for row in arr:
                stream.write(" ".join(repr(float(v)) for v in row) + "\n")


@dataclass(frozen=True, eq=False)
class QpSolution:
    d: np.ndarray
    eta: Multipliers
    kkt_error: float
    status: str  # "optimal" | "infeasible" | "max_iter"
    iterations: int


def modify_hessian(H: np.ndarray, delta: float) -> np.ndarray:
    """Floor the eigenvalues of a symmetric matrix at delta.

    Eigenvectors are preserved; every eigenvalue becomes max(delta, lambda_i).
    A matrix whose smallest eigenvalue is already >= delta is returned
    unchanged.
    """
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("H must be a square matrix")
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    if H.size and np.max(np.abs(H - H.T)) > SYMMETRY_TOL:
        raise ValueError("H is not symmetric")
    sym = (H + H.T) / 2.0
    w, q = np.linalg.eigh(sym)
    if w[0] >= delta:
        return np.array(H)
    out = (q * np.maximum(w, delta)) @ q.T
    return (out + out.T) / 2.0


def build_subproblem(prob: Problem, x: ManifoldPoint, basis: TangentBasis, h_plus: np.ndarray) -> QpModel:
    """Linearize the problem at x in the basis coordinates.

    The linear term and constraint rows are coordinates of the respective
    Riemannian gradients; since the basis is tangent, they equal the plain
    contraction of ambient gradients with the basis vectors.  Right-hand
    sides are the negated constraint values, so the model constraints read
    g_i + <grad g_i, d> <= 0 and h_j + <grad h_j, d> = 0.
    """
    d = len(basis)
    h_plus = np.asarray(h_plus, dtype=float)
    if h_plus.shape != (d, d):
        raise ValueError("Hessian model has wrong shape for the basis")
    if h_plus.size and np.max(np.abs(h_plus - h_plus.T)) > SYMMETRY_TOL:
        raise ValueError("Hessian model is not symmetric")
    xa = x.ambient
    bm = basis.matrix
    c = bm @ np.asarray(prob.objective.gradient(xa), dtype=float).ravel()
    g, h = constraint_values(prob, x)
    if prob.m:
        grads = np.array([fn.gradient(xa).ravel() for fn in prob.inequalities])
        a_ineq = grads @ bm.T
    else:
        a_ineq = np.zeros((0, d))
    if prob.n:
        grads = np.array([fn.gradient(xa).ravel() for fn in prob.equalities])
        a_eq = grads @ bm.T
    else:
        a_eq = np.zeros((0, d))
    return QpModel(H=h_plus, c=c, A_ineq=a_ineq, b_ineq=-g, A_eq=a_eq, b_eq=-h)


def kkt_violation(model: QpModel, d: np.ndarray, mu: np.ndarray, lam: np.ndarray) -> float:
    """Max-norm violation of the subproblem KKT conditions at (d, mu, lam).

    Evaluated in extended precision: steps along floored Hessian directions
    can be ~1e8 in norm, where float64 matrix-vector rounding alone would
    swamp a 1e-10 certificate.
    """
    ld = np.longdouble
    dl = d.astype(ld)
    stat = model.H.astype(ld) @ dl + model.c.astype(ld)
    if mu.size:
        stat = stat + model.A_ineq.T.astype(ld) @ mu.astype(ld)
    if lam.size:
        stat = stat + model.A_eq.T.astype(ld) @ lam.astype(ld)
    out = float(np.max(np.abs(stat))) if stat.size else 0.0
    if lam.size:
        out = max(out, float(np.max(np.abs(model.A_eq.astype(ld) @ dl - model.b_eq.astype(ld)))))
    if mu.size:
        slack = model.A_ineq.astype(ld) @ dl - model.b_ineq.astype(ld)
        out = max(out, float(max(0.0, np.max(slack))))
        out = max(out, float(max(0.0, -np.min(mu))))
        out = max(out, float(np.max(np.abs(mu.astype(ld) * slack))))
    return out


def _phase1_min_violation(model: QpModel) -> float:
    """Least total violation of the linearized constraints (elastic LP)."""
    d, m, n = model.dims
    nvar = d + m + 2 * n
    cost = np.zeros(nvar)
    cost[d:] = 1.0
    a_ub = None
    b_ub = None
    if m:
        a_ub = np.hstack([model.A_ineq, -np.eye(m), np.zeros((m, 2 * n))])
        b_ub = model.b_ineq
    a_eq = None
    b_eq = None
    if n:
        a_eq = np.hstack([model.A_eq, np.zeros((n, m)), np.eye(n), -np.eye(n)])
        b_eq = model.b_eq
    bounds = [(None, None)] * d + [(0, None)] * (m + 2 * n)
    res = linprog(cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if not res.success:
        return float("inf")
    return float(res.fun)


_REFINE_PASSES = 6


def _solve_saddle(H: np.ndarray, Ae: np.ndarray, r1: np.ndarray, r2: np.ndarray):
    """Solve [[H, Ae^T], [Ae, 0]] (x, y) = (r1, r2) by the null-space method.

    Returns (x, y).  Uses the SVD of Ae, so rank-deficient consistent rows
    are tolerated.  The backward error is polished by iterative refinement
    with extended-precision residuals: when H carries floored eigenvalues
    near delta, the solution norm scales like 1/delta and a single float64
    pass would leave the residual orders above the attainable floor.
    """
    d = r1.size
    n = Ae.shape[0]

    if n == 0:
        def direct(r1_, r2_):
            return scipy.linalg.cho_solve(cf, r1_), np.zeros(0)

        try:
            cf = scipy.linalg.cho_factor(H)
        except scipy.linalg.LinAlgError:
            def direct(r1_, r2_):  # noqa: F811 - fallback for semidefinite H
                return scipy.linalg.solve(H, r1_, assume_a="sym"), np.zeros(0)
    else:
        u, sv, vt = np.linalg.svd(Ae, full_matrices=True)
        rank = int(np.sum(sv > max(Ae.shape) * np.finfo(float).eps * (sv[0] if sv.size else 0.0)))
        ur = u[:, :rank]
        vr = vt[:rank].T
        z = vt[rank:].T  # null-space basis of Ae, shape (d, d - rank)
        if z.shape[1]:
            red = z.T @ H @ z
            try:
                red_cf = scipy.linalg.cho_factor(red)

                def solve_red(rhs):
                    return scipy.linalg.cho_solve(red_cf, rhs)
            except scipy.linalg.LinAlgError:
                def solve_red(rhs):
                    return scipy.linalg.solve(red, rhs, assume_a="sym")

        def direct(r1_, r2_):
            x = vr @ ((ur.T @ r2_) / sv[:rank])
            if z.shape[1]:
                x = x + z @ solve_red(z.T @ (r1_ - H @ x))
            lam = ur @ ((vr.T @ (r1_ - H @ x)) / sv[:rank])
            return x, lam

    ld = np.longdouble
    hl = H.astype(ld)
    al = Ae.astype(ld)
    r1l = r1.astype(ld)
    r2l = r2.astype(ld)

    x, lam = direct(r1, r2)
    best = None
    for sweep in range(_REFINE_PASSES + 1):
        res1 = r1l - hl @ x.astype(ld)
        if n:
            res1 = res1 - al.T @ lam.astype(ld)
            res2 = np.asarray(r2l - al @ x.astype(ld), dtype=float)
        else:
            res2 = np.zeros(0)
        res1 = np.asarray(res1, dtype=float)
        size = max(
            float(np.max(np.abs(res1))) if d else 0.0,
            float(np.max(np.abs(res2))) if n else 0.0,
        )
        if best is None or size < best[0]:
            best = (size, x, lam)
        else:
            break  # refinement has stopped helping
        if sweep == _REFINE_PASSES:
            break
        dx, dlam = direct(res1, res2)
        x = x + dx
        lam = lam + dlam
    return best[1], best[2]


def _solve_equality_qp(model: QpModel, tol: float) -> QpSolution:
    d, m, n = model.dims
    if n:
        # inconsistent equality rows mean there is nothing to optimize over
        x0, *_ = np.linalg.lstsq(model.A_eq, model.b_eq, rcond=None)
        if np.max(np.abs(model.A_eq @ x0 - model.b_eq)) > INFEASIBILITY_TOL:
            return QpSolution(
                d=np.zeros(d),
                eta=Multipliers.zeros(m, n),
                kkt_error=float("inf"),
                status="infeasible",
                iterations=0,
            )
    x, lam = _solve_saddle(model.H, model.A_eq, -model.c, model.b_eq)
    err = kkt_violation(model, x, np.zeros(0), lam)
    status = "optimal" if err <= tol else "max_iter"
    return QpSolution(d=x, eta=Multipliers(np.zeros(0), lam), kkt_error=err, status=status, iterations=1)


def _max_step(v: np.ndarray, dv: np.ndarray) -> float:
    neg = dv < 0.0
    if not np.any(neg):
        return np.inf
    return float(np.min(-v[neg] / dv[neg]))


def _solve_ipm(model: QpModel, tol: float) -> QpSolution:
    H, c = model.H, model.c
    ai, bi = model.A_ineq, model.b_ineq
    ae, be = model.A_eq, model.b_eq
    d, m, n = model.dims

    if n:
        x, *_ = np.linalg.lstsq(ae, be, rcond=None)
    else:
        x = np.zeros(d)
    y = np.zeros(n)
    s = np.maximum(1.0, bi - ai @ x)
    z = np.ones(m)

    best = None
    for it in range(1, _IPM_MAX_ITER + 1):
        err = kkt_violation(model, x, z, y)
        if best is None or err < best[0]:
            best = (err, x.copy(), z.copy(), y.copy(), it)
        if err <= tol:
            mu = np.where((z > -MU_CLAMP) & (z < 0.0), 0.0, z)
            return QpSolution(d=x, eta=Multipliers(mu, y), kkt_error=err, status="optimal", iterations=it)

        rd = H @ x + c + ai.T @ z + (ae.T @ y if n else 0.0)
        re = ae @ x - be if n else np.zeros(0)
        ri = ai @ x + s - bi
        gap = float(z @ s) / m

        # slacks collapse when the constraints are inconsistent; stop the
        # central path there and let the phase-1 check classify the model
        with np.errstate(over="ignore", divide="ignore"):
            dd = z / s
        if not np.all(np.isfinite(dd)):
            break
        mm = H + (ai.T * dd) @ ai
        kkt = np.zeros((d + n, d + n))
        kkt[:d, :d] = mm
        if n:
            kkt[:d, d:] = ae.T
            kkt[d:, :d] = ae
        try:
            # a singular system only warns here; the finiteness checks in
            # newton() catch the resulting inf/nan and end the path cleanly
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                lu = scipy.linalg.lu_factor(kkt)
        except (scipy.linalg.LinAlgError, ValueError):
            break

        def newton(rc):
            # near-collapsed slacks overflow these divisions; a None return
            # ends the central path at the best iterate so far
            rhs = np.empty(d + n)
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                rhs[:d] = -(rd + ai.T @ (rc / s + dd * ri))
            if n:
                rhs[d:] = -re
            if not np.all(np.isfinite(rhs)):
                return None
            sol = scipy.linalg.lu_solve(lu, rhs)
            if not np.all(np.isfinite(sol)):
                return None
            dx = sol[:d]
            dy = sol[d:]
            ds = -ri - ai @ dx
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                dz = (rc - z * ds) / s
            if not (np.all(np.isfinite(ds)) and np.all(np.isfinite(dz))):
                return None
            return dx, dy, ds, dz

        # predictor
        pred = newton(-z * s)
        if pred is None:
            break
        dxa, dya, dsa, dza = pred
        ap = min(1.0, _max_step(s, dsa))
        ad = min(1.0, _max_step(z, dza))
        gap_aff = float((z + ad * dza) @ (s + ap * dsa)) / m
        sigma = (max(gap_aff, 0.0) / gap) ** 3 if gap > 0.0 else 0.0

        # corrector
        rc = sigma * gap - z * s - dza * dsa
        corr = newton(rc)
        if corr is None:
            break
        dx, dy, ds, dz = corr
        ap = min(1.0, 0.99 * _max_step(s, ds))
        ad = min(1.0, 0.99 * _max_step(z, dz))
        x = x + ap * dx
        s = s + ap * ds
        y = y + ad * dy
        z = z + ad * dz
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(s)) and np.all(np.isfinite(z))):
            break
        if gap < 1e-18:
            break

    err, x, z, y, it = best
    if _phase1_min_violation(model) > INFEASIBILITY_TOL:
        status = "infeasible"
    else:
        status = "max_iter"
    mu = np.where((z > -MU_CLAMP) & (z < 0.0), 0.0, z)
    return QpSolution(d=x, eta=Multipliers(mu, y), kkt_error=err, status=status, iterations=it)


def solve_qp(model: QpModel, tol: float = 1e-10) -> QpSolution:
    """Solve the subproblem and certify the result.

    ``status`` is "optimal" only when the KKT violation of the returned
    point is <= tol.  A run that cannot be certified is classified by the
    phase-1 check: "infeasible" when even the most forgiving point violates
    the linearized constraints by more than 1e-8, "max_iter" otherwise.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    _, m, _ = model.dims
    if m == 0:
        return _solve_equality_qp(model, tol)
    return _solve_ipm(model, tol)
