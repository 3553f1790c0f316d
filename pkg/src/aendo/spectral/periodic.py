"""Periodic points of the zoo models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import INF, Point, dist_array, from_array, is_infinite, wrap_array
from ..models import CircleMul, Endomorphism, Product, Quadratic, TorusLinear, _int_det, int_adjugate
from .grid import BoxGrid

VERIFY_TOL = 1e-9
ROOT_PERIOD_MAX = 4


@dataclass(frozen=True)
class PeriodicPointSet:
    period: int
    points: tuple
    complete: bool = True

    def as_array(self, m):
        from ..geometry import to_array

        return to_array(list(self.points)) if self.points else np.empty((0, m.dimension) if m.is_torus else 0)


def periodic_points(f: Endomorphism, period: int, g: BoxGrid | None = None) -> PeriodicPointSet:
    """Solutions of f^period(x) = x, each verified by direct iteration.

    Closed forms cover the circle and torus models; the skew products solve
    the fiber equation by bisection along each periodic base orbit; the
    quadratic family roots the degree 2^p polynomial for p <= 4 and falls
    back to Newton's method from grid cell centers beyond (``complete`` False).
    """
    if period < 1:
        raise ValueError("period must be at least 1")
    complete = True
    if isinstance(f, CircleMul):
        X = _circle_points(f.k, period)[:, None]
    elif isinstance(f, TorusLinear):
        X = _torus_points(f.A, period)
    elif isinstance(f, Product):
        X = _skew_points(f, period)
    elif isinstance(f, Quadratic):
        X, complete = _quadratic_points(f, period, g)
    else:
        raise TypeError(f"no periodic-point solver for {type(f).__name__}")
    X = _verified(f, X, period)
    return PeriodicPointSet(period, tuple(from_array(f.manifold, X)), complete)


def periodic_points_raw(f: Endomorphism, max_period: int, g: BoxGrid | None = None):
    """Raw array of all periodic points of period 1..max_period (deduplicated)."""
    parts = []
    for p in range(1, max_period + 1):
        s = periodic_points(f, p, g)
        if s.points:
            parts.append(s.as_array(f.manifold))
    if not parts:
        return np.empty((0, f.manifold.dimension)) if f.manifold.is_torus else np.empty(0, dtype=complex)
    X = np.concatenate(parts)
    return _dedupe(f.manifold, X)


def _dedupe(m, X, tol=1e-10):
    if m.is_torus:
        key = np.round(wrap_array(X) / tol).astype(np.int64)
        key = np.where(key >= int(round(1 / tol)), 0, key)
        _, idx = np.unique(key, axis=0, return_index=True)
        return X[np.sort(idx)]
    inf = is_infinite(X)
    fin = X[~inf]
    key = np.stack([np.round(fin.real / tol), np.round(fin.imag / tol)], axis=1).astype(np.int64)
    _, idx = np.unique(key, axis=0, return_index=True)
    out = fin[np.sort(idx)]
    return np.concatenate([out, [INF]]) if inf.any() else out


def _verified(f, X, period):
    if len(X) == 0:
        return X
    Y = X
    for _ in range(period):
        Y = f.eval_raw(Y)
    ok = dist_array(f.manifold, Y, X) < VERIFY_TOL
    return _dedupe(f.manifold, X[ok])


def _circle_points(k, p):
    D = abs(k**p - 1)
    return np.arange(D) / D


def _torus_points(A, p):
    """The group M^-1 Z^d / Z^d for M = A^p - I, by closure over adj(M) columns."""
    d = len(A)
    M = np.linalg.matrix_power(np.array(A, dtype=object), p) - np.eye(d, dtype=int).astype(object)
    M = [[int(v) for v in row] for row in M]
    D = abs(_int_det(M))
    if D == 0:
        raise ValueError("A^p - I is singular")
    adj = np.array(int_adjugate(M), dtype=np.int64) % D
    gens = [adj[:, j] for j in range(d)]
    weights = D ** np.arange(d, dtype=np.int64)
    seen = {0}
    frontier = np.zeros((1, d), dtype=np.int64)
    found = [frontier]
    while len(frontier):
        cand = np.concatenate([(frontier + gv) % D for gv in gens])
        keys = cand @ weights
        keys, first = np.unique(keys, return_index=True)
        new = np.array([k not in seen for k in keys.tolist()], dtype=bool)
        frontier = cand[first[new]]
        seen.update(keys[new].tolist())
        found.append(frontier)
    pts = np.concatenate(found).astype(float) / D
    if len(pts) != D:
        raise RuntimeError(f"torus periodic enumeration found {len(pts)} of {D} points")
    return wrap_array(pts)


def _skew_points(f: Product, p, n_grid=512):
    xs = _circle_points(f.k, p)
    X0 = np.repeat(xs, n_grid)
    ys = np.tile((np.arange(n_grid) + 0.5) / n_grid, len(xs))

    def lift(y):
        # composed fiber lift along the base orbit, minus the identity
        x, yy = X0.copy(), y.copy()
        for _ in range(p):
            yy = f.fiber(x, yy)
            x = wrap_array(f.k * x)
        return yy - y

    F = lift(ys).reshape(len(xs), n_grid)
    # the lift minus identity is 1-periodic: wrap the last interval
    F2 = np.concatenate([F, F[:, :1]], axis=1)
    a_idx, b_idx = np.nonzero(np.sign(F2[:, :-1]) != np.sign(F2[:, 1:]))
    if len(a_idx) == 0:
        return np.empty((0, 2))
    lo = (b_idx + 0.5) / n_grid
    hi = lo + 1.0 / n_grid
    base = xs[a_idx]
    Xb = np.repeat(base, 1)

    def H(y):
        x, yy = Xb.copy(), y.copy()
        for _ in range(p):
            yy = f.fiber(x, yy)
            x = wrap_array(f.k * x)
        return yy - y

    flo = H(lo)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        fm = H(mid)
        left = np.sign(fm) == np.sign(flo)
        lo = np.where(left, mid, lo)
        flo = np.where(left, fm, flo)
        hi = np.where(left, hi, mid)
    y = wrap_array(0.5 * (lo + hi))
    return np.stack([Xb, y], axis=1)


def _quadratic_points(f: Quadratic, p, g):
    c = f.c
    if p <= ROOT_PERIOD_MAX:
        poly = np.array([1.0, 0.0], dtype=complex)  # z
        for _ in range(p):
            poly = np.polyadd(np.polymul(poly, poly), [c])
        poly = np.polysub(poly, [1.0, 0.0])
        Z = np.roots(poly)
        Z = _newton(f, Z, p)
        return np.concatenate([Z, [INF]]), True
    starts = g.centers(g.active_ids) if g is not None else np.exp(2j * np.pi * np.arange(256) / 256)
    starts = starts[~is_infinite(starts)]
    Z = _newton(f, starts, p, iters=60)
    Z = Z[np.isfinite(Z) & (np.abs(Z) < 1e6)]
    return np.concatenate([Z, [INF]]), False


def _newton(f: Quadratic, Z, p, iters=8):
    Z = np.asarray(Z, dtype=complex)
    with np.errstate(all="ignore"):
        for _ in range(iters):
            w, dw = Z.copy(), np.ones_like(Z)
            for _ in range(p):
                dw = 2 * w * dw
                w = w * w + f.c
            step = (w - Z) / (dw - 1)
            Z = np.where(np.isfinite(step), Z - step, Z)
    return Z
