"""Embedded Riemannian manifolds: points, tangent vectors, tangent bases.

Four manifolds are supported, all embedded in a Euclidean vector or matrix
space and carrying the metric induced by the ambient inner product:

* ``Euclidean(dim)``: flat space, used for reductions and toy problems.
* ``Sphere(ambient_dim)``: unit vectors in R^n, dimension n - 1.
* ``Oblique(q, s)``: q x s matrices whose rows are unit vectors in R^s,
  i.e. diag(X X^T) = e; dimension q (s - 1).
* ``FixedRank(q, s, p)``: q x s matrices of rank exactly p, stored as a
  factored triple (U, sigma, V) with U, V column-orthonormal and sigma > 0.

Tangent vectors are stored in the ambient shape for every manifold,
including FixedRank.  That keeps inner products, Gram-Schmidt and basis
coordinate arithmetic uniform across manifolds at the matrix sizes this
package targets.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "Euclidean",
    "Sphere",
    "Oblique",
    "FixedRank",
    "ManifoldPoint",
    "TangentVector",
    "TangentBasis",
    "RankDropError",
    "inner",
    "project_tangent",
    "retract",
    "exp_map",
    "orthonormal_basis",
    "random_point",
]

# Candidate tangent directions with post-projection norm below this are
# discarded and redrawn during basis generation.
GRAM_SCHMIDT_REJECT = 1e-8

# Retraction onto FixedRank fails when the p-th singular value falls below
# this fraction of the largest one.
RANK_DROP_RATIO = 1e-12


class RankDropError(RuntimeError):
    """Retraction target left the rank-p stratum."""


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class ManifoldPoint:
    """A point on a manifold.

    ``ambient`` is always the dense embedding.  For FixedRank the factored
    representation is kept in ``factors`` as (U, sigma, V) and ``ambient``
    is the assembled product U diag(sigma) V^T.
    """

    manifold: "Manifold"
    ambient: np.ndarray
    factors: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None


@dataclass(frozen=True, eq=False)
class TangentVector:
    """An ambient-shaped tangent vector anchored at a point."""

    point: ManifoldPoint
    data: np.ndarray

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def scaled(self, alpha: float) -> "TangentVector":
        return TangentVector(self.point, _readonly(alpha * self.data))

    def __add__(self, other: "TangentVector") -> "TangentVector":
        _check_anchor(self, other)
        return TangentVector(self.point, _readonly(self.data + other.data))


def _same_point(a: ManifoldPoint, b: ManifoldPoint) -> bool:
    if a is b:
        return True
    return a.manifold == b.manifold and np.array_equal(a.ambient, b.ambient)


def _check_anchor(u: TangentVector, v: TangentVector) -> None:
    if not _same_point(u.point, v.point):
        raise ValueError("tangent vectors are anchored at different points")


def inner(u: TangentVector, v: TangentVector) -> float:
    """Riemannian inner product (the ambient one, restricted)."""
    _check_anchor(u, v)
    return float(np.dot(u.data.ravel(), v.data.ravel()))


@dataclass(frozen=True, eq=False)
class TangentBasis:
    """An orthonormal basis of a tangent space.

    ``vectors`` has exactly ``manifold.dim`` entries.  ``matrix`` stacks the
    raveled basis vectors as rows, so coordinates of a tangent vector are a
    single matrix-vector product.
    """

    point: ManifoldPoint
    vectors: tuple[TangentVector, ...]
    seed: object = None

    def __len__(self) -> int:
        return len(self.vectors)

    @cached_property
    def matrix(self) -> np.ndarray:
        return _readonly(np.array([v.data.ravel() for v in self.vectors]))

    def coords(self, v: TangentVector) -> np.ndarray:
        if not _same_point(v.point, self.point):
            raise ValueError("tangent vector is not anchored at the basis point")
        return self.matrix @ v.data.ravel()

    def from_coords(self, coeffs: np.ndarray) -> TangentVector:
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (len(self.vectors),):
            raise ValueError("coefficient vector has wrong length")
        data = (coeffs @ self.matrix).reshape(self.point.ambient.shape)
        return TangentVector(self.point, _readonly(data))


class Manifold:
    """Shared interface.  Subclasses fill in the array-level geometry."""

    dim: int
    ambient_shape: tuple[int, ...]
    supports_exp: bool = True

    def point(self, data: np.ndarray) -> ManifoldPoint:
        data = np.asarray(data, dtype=float)
        if data.shape != self.ambient_shape:
            raise ValueError(
                f"expected shape {self.ambient_shape}, got {data.shape}"
            )
        return ManifoldPoint(self, _readonly(data))

    # -- array-level geometry ------------------------------------------

    def project_array(self, x: ManifoldPoint, a: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def retract_array(self, x: ManifoldPoint, a: np.ndarray) -> ManifoldPoint:
        raise NotImplementedError

    def exp_array(self, x: ManifoldPoint, a: np.ndarray) -> ManifoldPoint:
        raise NotImplementedError(f"{type(self).__name__} has no exponential map")

    def weingarten(self, x: ManifoldPoint, z: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Curvature correction W_x(z, g) entering embedded Hessians.

        ``z`` is tangent at ``x`` and ``g`` an arbitrary ambient vector; only
        the normal component of ``g`` contributes.
        """
        raise NotImplementedError

    def random_array(self, rng: np.random.Generator) -> ManifoldPoint:
        raise NotImplementedError

    def violation(self, x: ManifoldPoint) -> float:
        """Defect of the point invariants, 0.0 on an exact representation."""
        raise NotImplementedError

    def point_ok(self, x: ManifoldPoint, tol: float = 1e-10) -> bool:
        v = self.violation(x)
        return bool(np.isfinite(v) and v <= tol)


@dataclass(frozen=True)
class Euclidean(Manifold):
    """Flat space R^dim; every operation is the identity-like one."""

    ambient_dim: int

    @property
    def dim(self) -> int:
        return self.ambient_dim

    @property
    def ambient_shape(self) -> tuple[int, ...]:
        return (self.ambient_dim,)

    def project_array(self, x, a):
        return np.array(a, dtype=float)

    def retract_array(self, x, a):
        return ManifoldPoint(self, _readonly(x.ambient + a))

    def exp_array(self, x, a):
        return self.retract_array(x, a)

    def weingarten(self, x, z, g):
        return np.zeros_like(z)

    def random_array(self, rng):
        return ManifoldPoint(self, _readonly(rng.standard_normal(self.ambient_dim)))

    def violation(self, x):
        return 0.0


@dataclass(frozen=True)
class Sphere(Manifold):
    """Unit sphere in R^n with the induced metric.

    Tangent space at x is x^perp.  The retraction is metric projection
    (normalization), which agrees with the geodesic to second order.
    """

    ambient_dim: int

    @property
    def dim(self) -> int:
        return self.ambient_dim - 1

    @property
    def ambient_shape(self) -> tuple[int, ...]:
        return (self.ambient_dim,)

    def project_array(self, x, a):
        a = np.asarray(a, dtype=float)
        return a - np.dot(x.ambient, a) * x.ambient

    def retract_array(self, x, a):
        z = x.ambient + a
        return ManifoldPoint(self, _readonly(z / np.linalg.norm(z)))

    def exp_array(self, x, a):
        t = np.linalg.norm(a)
        if t == 0.0:
            return ManifoldPoint(self, _readonly(x.ambient))
        z = np.cos(t) * x.ambient + (np.sin(t) / t) * a
        return ManifoldPoint(self, _readonly(z))

    def weingarten(self, x, z, g):
        return -np.dot(x.ambient, g) * z

    def random_array(self, rng):
        z = rng.standard_normal(self.ambient_dim)
        return ManifoldPoint(self, _readonly(z / np.linalg.norm(z)))

    def violation(self, x):
        return abs(np.linalg.norm(x.ambient) - 1.0)


@dataclass(frozen=True)
class Oblique(Manifold):
    """Matrices in R^{q x s} with unit rows: diag(X X^T) = e.

    A product of q spheres S^{s-1}; all operations act row-wise.
    """

    q: int
    s: int

    @property
    def dim(self) -> int:
        return self.q * (self.s - 1)

    @property
    def ambient_shape(self) -> tuple[int, ...]:
        return (self.q, self.s)

    def project_array(self, x, a):
        a = np.asarray(a, dtype=float)
        row_dots = np.sum(x.ambient * a, axis=1, keepdims=True)
        return a - row_dots * x.ambient

    def retract_array(self, x, a):
        z = x.ambient + a
        norms = np.linalg.norm(z, axis=1, keepdims=True)
        return ManifoldPoint(self, _readonly(z / norms))

    def exp_array(self, x, a):
        a = np.asarray(a, dtype=float)
        t = np.linalg.norm(a, axis=1, keepdims=True)
        # rows with a zero tangent component stay put
        safe = np.where(t > 0.0, t, 1.0)
        z = np.cos(t) * x.ambient + np.sin(t) * (a / safe)
        z = np.where(t > 0.0, z, x.ambient)
        return ManifoldPoint(self, _readonly(z))

    def weingarten(self, x, z, g):
        row_dots = np.sum(x.ambient * g, axis=1, keepdims=True)
        return -row_dots * z

    def random_array(self, rng):
        z = rng.standard_normal((self.q, self.s))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        return ManifoldPoint(self, _readonly(z))

    def violation(self, x):
        row_sq = np.sum(x.ambient * x.ambient, axis=1)
        return float(np.linalg.norm(row_sq - 1.0))


@dataclass(frozen=True)
class FixedRank(Manifold):
    """Matrices in R^{q x s} of rank exactly p, stored factored.

    Points carry (U, sigma, V) with U in St(q, p), V in St(s, p) and
    sigma > 0; the dense embedding U diag(sigma) V^T is kept alongside.
    Tangent vectors are dense q x s arrays in the tangent space

        T_X = {U M V^T + U_p V^T + U V_p^T : U^T U_p = 0, V^T V_p = 0}.

    The retraction is metric projection: truncated SVD of X + xi back to
    rank p.  There is no exponential map here.
    """

    q: int
    s: int
    p: int
    supports_exp = False

    @property
    def dim(self) -> int:
        return self.p * (self.q + self.s - self.p)

    @property
    def ambient_shape(self) -> tuple[int, ...]:
        return (self.q, self.s)

    def from_factors(self, u: np.ndarray, sigma: np.ndarray, v: np.ndarray) -> ManifoldPoint:
        u = _readonly(u)
        sigma = _readonly(sigma)
        v = _readonly(v)
        if u.shape != (self.q, self.p) or v.shape != (self.s, self.p):
            raise ValueError("factor shapes do not match the manifold")
        if sigma.shape != (self.p,):
            raise ValueError("sigma must be a length-p vector")
        dense = (u * sigma) @ v.T
        return ManifoldPoint(self, _readonly(dense), factors=(u, sigma, v))

    def point(self, data):
        raise TypeError("FixedRank points are built from factors; use from_factors")

    def project_array(self, x, a):
        a = np.asarray(a, dtype=float)
        u, _, v = x.factors
        uta = u.T @ a
        av = a @ v
        return u @ uta + (av - u @ (uta @ v)) @ v.T

    def retract_array(self, x, a):
        z = x.ambient + a
        uu, ss, vvt = np.linalg.svd(z, full_matrices=False)
        if ss[self.p - 1] <= RANK_DROP_RATIO * ss[0]:
            raise RankDropError(
                f"retraction target is numerically rank-deficient: "
                f"sigma_p/sigma_1 = {ss[self.p - 1] / ss[0]:.3e}"
            )
        return self.from_factors(uu[:, : self.p], ss[: self.p], vvt[: self.p].T)

    def weingarten(self, x, z, g):
        u, sigma, v = x.factors
        zv = z @ v
        up = zv - u @ (u.T @ zv)
        ztu = z.T @ u
        vp = ztu - v @ (v.T @ ztu)
        gv = g @ (vp / sigma)
        term1 = (gv - u @ (u.T @ gv)) @ v.T
        gu = g.T @ (up / sigma)
        term2 = u @ (gu - v @ (v.T @ gu)).T
        return term1 + term2

    def random_array(self, rng):
        u, _ = np.linalg.qr(rng.standard_normal((self.q, self.p)))
        v, _ = np.linalg.qr(rng.standard_normal((self.s, self.p)))
        sigma = np.sort(rng.uniform(0.5, 1.5, self.p))[::-1]
        return self.from_factors(u, sigma, v)

    def violation(self, x):
        u, sigma, v = x.factors
        if np.any(sigma <= 0.0):
            return float("inf")
        du = np.linalg.norm(u.T @ u - np.eye(self.p))
        dv = np.linalg.norm(v.T @ v - np.eye(self.p))
        return float(max(du, dv))


# -- free-function API ----------------------------------------------------


def project_tangent(x: ManifoldPoint, a: np.ndarray) -> TangentVector:
    """Orthogonal projection of an ambient array onto the tangent space."""
    a = np.asarray(a, dtype=float)
    if a.shape != x.manifold.ambient_shape:
        raise ValueError(
            f"expected shape {x.manifold.ambient_shape}, got {a.shape}"
        )
    return TangentVector(x, _readonly(x.manifold.project_array(x, a)))


def retract(x: ManifoldPoint, xi: TangentVector) -> ManifoldPoint:
    if not _same_point(xi.point, x):
        raise ValueError("tangent vector is not anchored at the given point")
    return x.manifold.retract_array(x, xi.data)


def exp_map(x: ManifoldPoint, xi: TangentVector) -> ManifoldPoint:
    if not _same_point(xi.point, x):
        raise ValueError("tangent vector is not anchored at the given point")
    return x.manifold.exp_array(x, xi.data)


def random_point(manifold: Manifold, seed) -> ManifoldPoint:
    rng = np.random.default_rng(seed)
    return manifold.random_array(rng)


def orthonormal_basis(x: ManifoldPoint, seed) -> TangentBasis:
    """Draw a random orthonormal basis of T_x via modified Gram-Schmidt.

    Gaussian ambient candidates are projected to the tangent space and
    orthogonalized against the accepted vectors twice (one reorthogonalization
    pass).  Candidates whose remaining norm falls below ``GRAM_SCHMIDT_REJECT``
    are discarded and redrawn.  Deterministic for a fixed seed.
    """
    man = x.manifold
    rng = np.random.default_rng(seed)
    d = man.dim
    rows: list[np.ndarray] = []
    attempts = 0
    budget = 50 * d + 50
    while len(rows) < d:
        if attempts >= budget:
            raise RuntimeError("orthonormal basis generation failed to converge")
        attempts += 1
        cand = man.project_array(x, rng.standard_normal(man.ambient_shape))
        v = cand.ravel()
        for _ in range(2):
            for q in rows:
                v = v - np.dot(q, v) * q
        nrm = np.linalg.norm(v)
        if nrm < GRAM_SCHMIDT_REJECT:
            continue
        rows.append(v / nrm)
    shape = man.ambient_shape
    vectors = tuple(TangentVector(x, _readonly(r.reshape(shape))) for r in rows)
    return TangentBasis(x, vectors, seed=seed)
