"""Charts, points, tangent vectors and metrics on flat tori and the Riemann sphere.

Two coordinate conventions are used throughout the package:

* Public values are :class:`Point` / :class:`TangentVector` instances.  A torus
  point stores its coordinates reduced into ``[0, 1)``; a sphere point stores
  ``(re, im)`` of the finite value, or the ``at_infinity`` flag.
* Bulk numerics work on raw arrays: ``(n, d)`` float arrays on ``T^d`` and
  complex ``(n,)`` arrays on the sphere, where the point at infinity is the
  IEEE value ``complex(inf, 0)`` and is always tested with :func:`is_infinite`
  before any arithmetic touches it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "ManifoldSpec",
    "Point",
    "TangentVector",
    "torus",
    "SPHERE",
    "INF",
    "sphere_point",
    "infinity",
    "wrap",
    "distance",
    "norm",
    "points_close",
    "wrap_array",
    "dist_array",
    "conformal_factor",
    "norm_array",
    "is_infinite",
    "to_array",
    "from_array",
]

INF = complex(np.inf, 0.0)


@dataclass(frozen=True)
class ManifoldSpec:
    kind: str  # "torus" or "sphere"
    dimension: int

    def __post_init__(self):
        if self.kind == "torus":
            if self.dimension not in (1, 2, 3):
                raise ValueError(f"torus dimension must be 1, 2 or 3, got {self.dimension}")
        elif self.kind == "sphere":
            if self.dimension != 2:
                raise ValueError("the Riemann sphere has dimension 2")
        else:
            raise ValueError(f"unknown manifold kind {self.kind!r}")

    @property
    def is_torus(self) -> bool:
        return self.kind == "torus"

    @property
    def is_sphere(self) -> bool:
        return self.kind == "sphere"

    def __str__(self):
        return f"T^{self.dimension}" if self.is_torus else "S^2"


def torus(d: int) -> ManifoldSpec:
    return ManifoldSpec("torus", d)


SPHERE = ManifoldSpec("sphere", 2)


@dataclass(frozen=True)
class Point:
    manifold: ManifoldSpec
    coords: tuple
    at_infinity: bool = False

    @property
    def z(self) -> complex:
        """Complex value of a sphere point (``INF`` at infinity)."""
        if not self.manifold.is_sphere:
            raise TypeError("z is only defined for sphere points")
        if self.at_infinity:
            return INF
        return complex(self.coords[0], self.coords[1])

    def __repr__(self):
        if self.manifold.is_sphere:
            return "Point(inf)" if self.at_infinity else f"Point({self.z})"
        return f"Point({', '.join(f'{c:.12g}' for c in self.coords)})"


@dataclass(frozen=True)
class TangentVector:
    base: Point
    components: tuple

    def __post_init__(self):
        if len(self.components) != self.base.manifold.dimension:
            raise ValueError("tangent vector dimension does not match the manifold")


def _wrap01(x):
    y = np.mod(x, 1.0)
    # np.mod(-1e-18, 1.0) rounds to 1.0
    return np.where(y >= 1.0, 0.0, y)


def sphere_point(z) -> Point:
    z = complex(z)
    if math.isinf(z.real) or math.isinf(z.imag):
        return infinity()
    return Point(SPHERE, (float(z.real) + 0.0, float(z.imag) + 0.0), False)


def infinity() -> Point:
    return Point(SPHERE, (0.0, 0.0), True)


def wrap(coords, m: ManifoldSpec) -> Point:
    """Reduce torus coordinates mod 1 into ``[0, 1)``."""
    if not m.is_torus:
        raise ValueError("wrap is only defined on tori")
    c = np.atleast_1d(np.asarray(coords, dtype=float))
    if c.shape != (m.dimension,):
        raise ValueError(f"expected {m.dimension} coordinates, got shape {c.shape}")
    return Point(m, tuple(float(v) for v in _wrap01(c)))


def distance(p: Point, q: Point) -> float:
    if p.manifold != q.manifold:
        raise ValueError(f"points live on different manifolds ({p.manifold}, {q.manifold})")
    if p.manifold.is_torus:
        return float(dist_array(p.manifold, np.array(p.coords), np.array(q.coords)))
    return float(dist_array(p.manifold, np.array(p.z), np.array(q.z)))


def norm(v: TangentVector) -> float:
    comps = np.asarray(v.components, dtype=float)
    e = float(np.linalg.norm(comps))
    if v.base.manifold.is_torus:
        return e
    if v.base.at_infinity:
        raise ValueError("tangent vectors at infinity have no z-chart components")
    return float(conformal_factor(v.base.z)) * e


def points_close(p: Point, q: Point, tol: float = 1e-9) -> bool:
    return distance(p, q) <= tol


# -- bulk helpers -----------------------------------------------------------

def is_infinite(z):
    z = np.asarray(z)
    return np.isinf(z.real) | np.isinf(z.imag)


def wrap_array(X):
    return _wrap01(np.asarray(X, dtype=float))


def dist_array(m: ManifoldSpec, A, B):
    """Broadcasting distance between raw coordinate arrays."""
    if m.is_torus:
        D = np.abs(np.asarray(A, dtype=float) - np.asarray(B, dtype=float))
        D = np.mod(D, 1.0)
        D = np.minimum(D, 1.0 - D)
        return np.sqrt(np.sum(D * D, axis=-1))
    a = np.asarray(A, dtype=complex)
    b = np.asarray(B, dtype=complex)
    a, b = np.broadcast_arrays(a, b)
    ia, ib = is_infinite(a), is_infinite(b)
    with np.errstate(invalid="ignore", over="ignore"):
        aa = np.where(ia, 0, a)
        bb = np.where(ib, 0, b)
        fin = 2 * np.abs(aa - bb) / np.sqrt((1 + np.abs(aa) ** 2) * (1 + np.abs(bb) ** 2))
        to_inf_a = 2 / np.sqrt(1 + np.abs(bb) ** 2)
        to_inf_b = 2 / np.sqrt(1 + np.abs(aa) ** 2)
    out = np.where(ia & ib, 0.0, np.where(ia, to_inf_a, np.where(ib, to_inf_b, fin)))
    return out


def conformal_factor(z):
    """Round-metric density ``2 / (1 + |z|^2)`` in the z-chart."""
    z = np.asarray(z, dtype=complex)
    return 2.0 / (1.0 + np.abs(z) ** 2)


def norm_array(m: ManifoldSpec, X, V):
    """Norms of chart vectors ``V[..., d]`` based at raw points ``X``."""
    e = np.linalg.norm(np.asarray(V, dtype=float), axis=-1)
    if m.is_torus:
        return e
    return conformal_factor(X) * e


def to_array(points: Sequence[Point]):
    if not points:
        raise ValueError("empty point list")
    m = points[0].manifold
    if m.is_torus:
        return np.array([p.coords for p in points], dtype=float).reshape(len(points), m.dimension)
    return np.array([p.z for p in points], dtype=complex)


def from_array(m: ManifoldSpec, X) -> list[Point]:
    if m.is_torus:
        X = wrap_array(np.asarray(X, dtype=float).reshape(-1, m.dimension))
        return [Point(m, tuple(float(v) for v in row)) for row in X]
    return [sphere_point(z) for z in np.asarray(X, dtype=complex).ravel()]


def point_from_raw(m: ManifoldSpec, x) -> Point:
    if m.is_torus:
        return wrap(x, m)
    return sphere_point(complex(x))


def raw(p: Point):
    """Raw coordinates of a single point (float vector or complex scalar)."""
    if p.manifold.is_torus:
        return np.array(p.coords, dtype=float)
    return p.z
