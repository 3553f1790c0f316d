"""Concrete endomorphisms with analytic preimages.

Every model works on raw coordinate arrays in bulk (``eval_raw``, ``jac_raw``,
``preimages_bulk``) and exposes the point-level operations used by the rest of
the package through :func:`evaluate`, :func:`jacobian`, :func:`preimages`,
:func:`is_regular` and :func:`degree`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import PreconditionError
from .geometry import (
    INF,
    SPHERE,
    ManifoldSpec,
    Point,
    is_infinite,
    point_from_raw,
    raw,
    sphere_point,
    torus,
    wrap_array,
)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class JacobianMatrix:
    base: Point
    entries: np.ndarray

    def __post_init__(self):
        d = self.base.manifold.dimension
        if self.entries.shape != (d, d):
            raise ValueError(f"Jacobian must be {d}x{d}")


class Endomorphism:
    """Common interface of the model zoo."""

    manifold: ManifoldSpec
    name: str = "endomorphism"

    def eval_raw(self, X):
        raise NotImplementedError

    def jac_raw(self, X):
        raise NotImplementedError

    def preimages_bulk(self, Q):
        """Return ``(P, mask)``: candidate preimages ``(n, k, ...)`` and validity mask ``(n, k)``."""
        raise NotImplementedError

    @property
    def degree(self) -> int:
        raise NotImplementedError

    def singular_points(self) -> list[Point]:
        return []

    def describe(self) -> dict[str, Any]:
        raise NotImplementedError

    # convenience -----------------------------------------------------------
    def __call__(self, p: Point) -> Point:
        return evaluate(self, p)

    def preimages_raw(self, q):
        """Sorted, deduplicated preimages of a single raw point."""
        Q = np.asarray(q)[None, ...] if self.manifold.is_torus else np.array([q], dtype=complex)
        P, mask = self.preimages_bulk(Q)
        out = P[0][mask[0]]
        return _sort_raw(self.manifold, out)

    def iterate_raw(self, X, n: int):
        for _ in range(n):
            X = self.eval_raw(X)
        return X


def _sort_raw(m: ManifoldSpec, P):
    if len(P) <= 1:
        return P
    if m.is_torus:
        order = np.lexsort(P.T[::-1])
        return P[order]
    inf = is_infinite(P)
    keys = np.where(inf, np.inf, P.real), np.where(inf, np.inf, P.imag)
    order = np.lexsort((keys[1], keys[0]))
    return P[order]


# -- circle and torus ----------------------------------------------------------

@dataclass(frozen=True, eq=True)
class CircleMul(Endomorphism):
    """x -> k x (mod 1) on the circle."""

    k: int
    manifold: ManifoldSpec = field(default=torus(1), init=False)
    name: str = field(default="circle_mul", init=False)

    def __post_init__(self):
        if abs(int(self.k)) < 2 or int(self.k) != self.k:
            raise PreconditionError(f"circle_mul needs an integer |k| >= 2, got {self.k}")

    def eval_raw(self, X):
        return wrap_array(self.k * np.asarray(X, dtype=float))

    def jac_raw(self, X):
        X = np.asarray(X, dtype=float).reshape(-1, 1)
        return np.full((len(X), 1, 1), float(self.k))

    def preimages_bulk(self, Q):
        Q = np.asarray(Q, dtype=float).reshape(-1, 1)
        j = np.arange(abs(self.k), dtype=float)
        P = wrap_array((Q[:, None, :] + j[None, :, None]) / self.k)
        return P, np.ones(P.shape[:2], dtype=bool)

    @property
    def degree(self):
        return abs(self.k)

    def describe(self):
        return {"model": "circle_mul", "k": int(self.k)}


def _int_det(A) -> int:
    M = [list(r) for r in A]
    n = len(M)
    if n == 1:
        return M[0][0]
    if n == 2:
        return M[0][0] * M[1][1] - M[0][1] * M[1][0]
    return sum(
        (-1) ** j * M[0][j] * _int_det([row[:j] + row[j + 1:] for row in M[1:]]) for j in range(n)
    )


def int_adjugate(A) -> list[list[int]]:
    M = [list(r) for r in A]
    n = len(M)
    if n == 1:
        return [[1]]
    adj = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [row[:j] + row[j + 1:] for k, row in enumerate(M) if k != i]
            adj[j][i] = (-1) ** (i + j) * _int_det(minor)
    return adj


def coset_representatives(A) -> np.ndarray:
    """Integer vectors m, one per class of Z^d / A Z^d (those with A^-1 m in [0,1)^d)."""
    A = [list(map(int, r)) for r in A]
    d = len(A)
    det = _int_det(A)
    D = abs(det)
    sgn = 1 if det > 0 else -1
    adj = int_adjugate(A)
    corners = np.array(list(itertools.product((0, 1), repeat=d)))
    img = corners @ np.array(A).T
    lo, hi = img.min(axis=0), img.max(axis=0)
    reps = []
    for m in itertools.product(*(range(int(a), int(b) + 1) for a, b in zip(lo, hi))):
        num = [sgn * sum(adj[i][j] * m[j] for j in range(d)) for i in range(d)]
        if all(0 <= v < D for v in num):
            reps.append(m)
    if len(reps) != D:
        raise RuntimeError("coset enumeration failed")
    return np.array(sorted(reps), dtype=float)


@dataclass(frozen=True, eq=True)
class TorusLinear(Endomorphism):
    """Algebraic endomorphism x -> A x (mod Z^d) with a hyperbolic integer matrix."""

    A: tuple
    manifold: ManifoldSpec = field(init=False)
    name: str = field(default="torus_linear", init=False)

    def __post_init__(self):
        rows = tuple(tuple(int(v) for v in r) for r in self.A)
        d = len(rows)
        if d not in (1, 2, 3) or any(len(r) != d for r in rows):
            raise PreconditionError("torus_linear needs a square 1x1, 2x2 or 3x3 matrix")
        if any(float(v) != v for r in self.A for v in r):
            raise PreconditionError("torus_linear needs integer entries")
        object.__setattr__(self, "A", rows)
        object.__setattr__(self, "manifold", torus(d))
        if _int_det(rows) == 0:
            raise PreconditionError("torus_linear matrix is singular")
        eig = np.linalg.eigvals(np.array(rows, dtype=float))
        if np.any(np.abs(1.0 - np.abs(eig)) <= 1e-9):
            raise PreconditionError(f"torus_linear matrix has an eigenvalue on the unit circle: {eig}")

    @property
    def matrix(self):
        return np.array(self.A, dtype=float)

    @property
    def _inv(self):
        return np.linalg.inv(self.matrix)

    @property
    def _reps(self):
        cache = self.__dict__.get("_reps_cache")
        if cache is None:
            cache = coset_representatives(self.A)
            object.__setattr__(self, "_reps_cache", cache)
        return cache

    def eval_raw(self, X):
        X = np.asarray(X, dtype=float).reshape(-1, self.manifold.dimension)
        return wrap_array(X @ self.matrix.T)

    def jac_raw(self, X):
        X = np.asarray(X, dtype=float).reshape(-1, self.manifold.dimension)
        return np.broadcast_to(self.matrix, (len(X),) + self.matrix.shape).copy()

    def preimages_bulk(self, Q):
        d = self.manifold.dimension
        Q = np.asarray(Q, dtype=float).reshape(-1, d)
        R = self._reps
        P = wrap_array((Q[:, None, :] + R[None, :, :]) @ self._inv.T)
        return P, np.ones(P.shape[:2], dtype=bool)

    @property
    def degree(self):
        return abs(_int_det(self.A))

    def describe(self):
        return {"model": "torus_linear", "matrix": [list(r) for r in self.A]}


# -- Riemann sphere --------------------------------------------------------------

@dataclass(frozen=True, eq=True)
class Quadratic(Endomorphism):
    """z -> z^2 + c on the Riemann sphere."""

    c: complex
    manifold: ManifoldSpec = field(default=SPHERE, init=False)
    name: str = field(default="quadratic", init=False)

    def __post_init__(self):
        object.__setattr__(self, "c", complex(self.c))

    def eval_raw(self, Z):
        Z = np.asarray(Z, dtype=complex).ravel()
        inf = is_infinite(Z)
        with np.errstate(over="ignore", invalid="ignore"):
            W = np.where(inf, 0, Z) ** 2 + self.c
        W = np.where(inf | is_infinite(W) | np.isnan(W.real), INF, W)
        return W

    def jac_raw(self, Z):
        Z = np.asarray(Z, dtype=complex).ravel()
        inf = is_infinite(Z)
        d = np.where(inf, 0, 2 * np.where(inf, 0, Z))
        J = np.empty((len(Z), 2, 2))
        J[:, 0, 0] = d.real
        J[:, 0, 1] = -d.imag
        J[:, 1, 0] = d.imag
        J[:, 1, 1] = d.real
        return J

    def preimages_bulk(self, Q):
        Q = np.asarray(Q, dtype=complex).ravel()
        inf = is_infinite(Q)
        r = np.sqrt(np.where(inf, 0, Q) - self.c)
        P = np.stack([r, -r], axis=1)
        P[inf] = INF
        mask = np.ones(P.shape, dtype=bool)
        mask[:, 1] = ~(inf | (r == 0))
        return P, mask

    @property
    def degree(self):
        return 2

    def singular_points(self):
        return [sphere_point(0), sphere_point(INF)]

    def describe(self):
        return {"model": "quadratic", "c_re": self.c.real, "c_im": self.c.imag}


# -- skew products over the circle ---------------------------------------------------

@dataclass(frozen=True)
class MorseSmale:
    """Circle diffeomorphism y -> y - a sin(2 pi y) with sink 0 and source 1/2."""

    a: float

    def __post_init__(self):
        if not 0.0 < self.a < 1.0 / TWO_PI:
            raise PreconditionError(f"Morse-Smale amplitude must lie in (0, 1/(2 pi)), got {self.a}")

    def lift(self, y):
        return y - self.a * np.sin(TWO_PI * y)

    def __call__(self, y):
        return wrap_array(self.lift(y))

    def deriv(self, y):
        return 1.0 - TWO_PI * self.a * np.cos(TWO_PI * y)

    def inverse(self, q):
        """Unique preimage in [0, 1): bisection on the lift to a tight bracket, then Newton."""
        q = np.asarray(q, dtype=float)
        lo = q - self.a
        hi = q + self.a
        for _ in range(16):
            mid = 0.5 * (lo + hi)
            below = self.lift(mid) < q
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        y = 0.5 * (lo + hi)
        for _ in range(4):  # g' >= 1 - 2 pi a > 0 keeps Newton inside the bracket
            y = y - (self.lift(y) - q) / self.deriv(y)
        return wrap_array(y)


@dataclass(frozen=True, eq=True)
class Product(Endomorphism):
    """(x, y) -> (k x, g(y)): expanding circle map times a Morse-Smale diffeomorphism."""

    k: int
    a: float
    manifold: ManifoldSpec = field(default=torus(2), init=False)
    name: str = field(default="product", init=False)

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise PreconditionError(f"expanding factor needs an integer k >= 2, got {self.k}")
        MorseSmale(self.a)

    @property
    def g(self):
        return MorseSmale(self.a)

    def shear(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def shear_deriv(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    # Fiber map G(x, y) with F(x, y) = (k x, G(x, y)).  The product and the forced
    # model share the shape G(x, y) = g(y - s(x)) + s(k x).
    def fiber(self, x, y):
        s = self.shear
        return self.g.lift(y - s(x)) + s(self.k * x)

    def eval_raw(self, X):
        X = np.asarray(X, dtype=float).reshape(-1, 2)
        x, y = X[:, 0], X[:, 1]
        return wrap_array(np.stack([self.k * x, self.fiber(x, y)], axis=1))

    def jac_raw(self, X):
        X = np.asarray(X, dtype=float).reshape(-1, 2)
        x, y = X[:, 0], X[:, 1]
        gp = self.g.deriv(y - self.shear(x))
        J = np.zeros((len(X), 2, 2))
        J[:, 0, 0] = self.k
        J[:, 1, 0] = -gp * self.shear_deriv(x) + self.k * self.shear_deriv(self.k * x)
        J[:, 1, 1] = gp
        return J

    def preimages_bulk(self, Q):
        Q = np.asarray(Q, dtype=float).reshape(-1, 2)
        qx, qy = Q[:, 0], Q[:, 1]
        j = np.arange(self.k, dtype=float)
        px = wrap_array((qx[:, None] + j[None, :]) / self.k)
        base = self.g.inverse(wrap_array(qy - self.shear(qx)))
        py = wrap_array(base[:, None] + self.shear(px))
        P = np.stack([px, py], axis=2)
        return P, np.ones(P.shape[:2], dtype=bool)

    @property
    def degree(self):
        return int(self.k)

    def describe(self):
        return {"model": "product", "k": int(self.k), "amplitude": float(self.a)}


@dataclass(frozen=True, eq=True)
class ForcedCircle(Product):
    """Shear conjugate of :class:`Product` with attractor y = kappa sin(2 pi x).

    F(x, y) = (k x, g(y - kappa sin 2 pi x) + kappa sin 2 pi k x), i.e.
    F = S o P o S^-1 with S(x, y) = (x, y + kappa sin 2 pi x).  Its attractor and
    repeller are the non-flat invariant graphs S({y = 0}) and S({y = 1/2}).
    """

    kappa: float = 0.02
    name: str = field(default="forced_circle", init=False)

    def __post_init__(self):
        super().__post_init__()
        margin = (1.0 - self.g.deriv(0.0)) / 2.0
        if not 0.0 <= TWO_PI * abs(self.kappa) < margin:
            raise PreconditionError(
                f"forcing too strong: 2 pi kappa = {TWO_PI * abs(self.kappa):.4g} must stay below {margin:.4g}"
            )

    def shear(self, x):
        return self.kappa * np.sin(TWO_PI * np.asarray(x, dtype=float))

    def shear_deriv(self, x):
        return TWO_PI * self.kappa * np.cos(TWO_PI * np.asarray(x, dtype=float))

    def describe(self):
        d = super().describe()
        d.update(model="forced_circle", kappa=float(self.kappa))
        return d


# -- point-level operations ---------------------------------------------------------

def _check(f: Endomorphism, p: Point):
    if p.manifold != f.manifold:
        raise ValueError(f"point on {p.manifold} given to a model on {f.manifold}")


def evaluate(f: Endomorphism, p: Point) -> Point:
    _check(f, p)
    out = f.eval_raw(raw(p)[None, ...] if f.manifold.is_torus else np.array([raw(p)]))
    return point_from_raw(f.manifold, out[0])


def jacobian(f: Endomorphism, p: Point) -> JacobianMatrix:
    _check(f, p)
    if p.manifold.is_sphere and p.at_infinity:
        raise ValueError("the z-chart Jacobian is not defined at infinity")
    x = raw(p)
    J = f.jac_raw(x[None, ...] if f.manifold.is_torus else np.array([x]))[0]
    return JacobianMatrix(p, np.array(J, dtype=float))


def preimages(f: Endomorphism, q: Point) -> list[Point]:
    _check(f, q)
    return [point_from_raw(f.manifold, r) for r in f.preimages_raw(raw(q))]


def is_regular(f: Endomorphism, p: Point) -> bool:
    _check(f, p)
    if p.manifold.is_sphere and p.at_infinity:
        return not isinstance(f, Quadratic)
    return abs(float(np.linalg.det(jacobian(f, p).entries))) > 1e-12


def regular_mask(f: Endomorphism, X):
    """Bulk regularity test on raw coordinates."""
    J = f.jac_raw(X)
    ok = np.abs(np.linalg.det(J)) > 1e-12
    if f.manifold.is_sphere:
        ok &= ~is_infinite(np.asarray(X, dtype=complex).ravel())
    return ok


def degree(f: Endomorphism) -> int:
    return f.degree


def from_params(params: dict[str, Any]) -> Endomorphism:
    """Build a model from a flat parameter mapping (config-file keys)."""
    kind = params.get("model")
    if kind == "circle_mul":
        return CircleMul(int(params.get("k", 2)))
    if kind == "torus_linear":
        matrix = params.get("matrix")
        if matrix is None:
            raise PreconditionError("torus_linear needs a 'matrix' parameter")
        return TorusLinear(tuple(tuple(int(v) for v in r) for r in matrix))
    if kind == "quadratic":
        return Quadratic(complex(float(params.get("c_re", 0.0)), float(params.get("c_im", 0.0))))
    if kind == "product":
        return Product(int(params.get("k", 2)), float(params.get("amplitude", 0.1)))
    if kind == "forced_circle":
        return ForcedCircle(
            int(params.get("k", 2)), float(params.get("amplitude", 0.1)), float(params.get("kappa", 0.02))
        )
    raise PreconditionError(f"unknown model {kind!r}")
