"""Smoothness evidence for invariant circles: fitted graphs and their difference quotients.

A C^1 curve has first difference quotients that settle as the sampling grid
is refined; a nowhere-differentiable quasi-circle has quotients that blow up.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import NonConvergent, NotAGraph, PreconditionError
from ..models import Endomorphism, Product, Quadratic
from .sets import BasicSetApprox


@dataclass
class SmoothnessReport:
    refinement: int  # log2 of the number of graph nodes
    sup_abs: float
    max_first_quotient: float
    max_second_quotient: float
    invariance_residual: float
    iterations: int

    def as_dict(self):
        return asdict(self)


def _signed(d):
    """Representative of d mod 1 in [-1/2, 1/2)."""
    return (np.asarray(d) + 0.5) % 1.0 - 0.5


def _quotients(h, dx):
    d1 = _signed(np.roll(h, -1) - h) / dx
    d2 = _signed(np.roll(h, -1) - 2 * h + np.roll(h, 1)) / dx**2
    return float(np.max(np.abs(d1))), float(np.max(np.abs(d2)))


def _column_centers(L: BasicSetApprox):
    """Per-column centre height of the set's cells; the cells must form a graph."""
    g = L.grid
    n = g.n
    rows = np.zeros((n, n), dtype=bool)  # [column, row]
    ix, iy = np.divmod(L.cells, n)[::-1]
    rows[ix, iy] = True
    centers = np.empty(n)
    for c in range(n):
        r = rows[c]
        if not r.any():
            raise NotAGraph(f"column {c} holds no cell of the set")
        if r.all():
            raise NotAGraph(f"column {c} is filled by the set")
        # one cyclic run: exactly one rising edge around the circle
        starts = np.nonzero(r & ~np.roll(r, 1))[0]
        if len(starts) != 1:
            raise NotAGraph(f"column {c} holds {len(starts)} separate runs of cells")
        s = int(starts[0])
        length = int(r.sum())
        centers[c] = (s + length / 2.0) * g.h
    return _signed(centers)


def attractor_smoothness(
    f: Endomorphism, L: BasicSetApprox, m: int = 7, tol: float = 1e-13, max_iter: int = 2000
) -> SmoothnessReport:
    """Fit the invariant graph y = h(x) of a codimension-one attractor on 2^m nodes.

    Starting from per-column cell centres, h is refined by the graph transform
    h(x) <- mean over preimages p of x of G(p, h(p)), with G the fiber map and h
    interpolated linearly.  The transform contracts at the fiber rate, so it
    converges to the invariant graph of the interpolated problem.
    """
    if not isinstance(f, Product):
        raise PreconditionError("smoothness fitting needs a skew product on the 2-torus")
    if L.type_uv is None:
        raise PreconditionError("basic set has no type; run basic_set_type first")
    n = f.manifold.dimension
    if tuple(L.type_uv) != (n - 1, 1):
        raise PreconditionError(f"type {tuple(L.type_uv)} is not ({n - 1}, 1)")
    if L.grid.manifold != f.manifold:
        raise PreconditionError("basic set grid and model live on different manifolds")
    coarse = _column_centers(L)
    N = 2**m
    x = np.arange(N) / N
    xc = (np.arange(L.grid.n) + 0.5) * L.grid.h
    h = _interp(coarse, xc, x)
    k = f.k
    P = (x[None, :] + np.arange(k)[:, None]) / k  # preimages of every node
    it = 0
    for it in range(1, max_iter + 1):
        hp = _interp(h, x, P)
        Y = f.fiber(P, hp)
        Y = Y[0] + np.mean(_signed(Y - Y[0]), axis=0)
        new = _signed(Y)
        step = float(np.max(np.abs(_signed(new - h))))
        h = new
        if step < tol:
            break
    else:
        raise NonConvergent(f"graph transform did not settle in {max_iter} iterations (last step {step:.3g})")
    d1, d2 = _quotients(h, 1.0 / N)
    img = f.fiber(x, h)
    target = h[(k * np.arange(N)) % N]
    res = float(np.max(np.abs(_signed(img - target))))
    return SmoothnessReport(m, float(np.max(np.abs(h))), d1, d2, res, it)


def _interp(h, xs, q):
    """Periodic linear interpolation of node values h at abscissae xs (uniform, sorted)."""
    n = len(h)
    dx = xs[1] - xs[0] if n > 1 else 1.0
    t = ((np.asarray(q) - xs[0]) / dx) % n
    i = np.floor(t).astype(np.int64) % n
    w = t - np.floor(t)
    a, b = h[i], h[(i + 1) % n]
    return a + w * _signed(b - a)


# -- invariant curves of the quadratic family -------------------------------------------------

def attracting_fixed_point(c: complex) -> complex:
    return complex((1 - np.sqrt(complex(1 - 4 * c))) / 2)


def repeller_curve_quotients(
    f: Quadratic, m: int = 7, L: BasicSetApprox | None = None, tol: float = 1e-13, max_iter: int = 400
) -> SmoothnessReport:
    """Difference quotients of the invariant curve of z^2 + c seen as a polar graph.

    The curve is the image of the conjugacy phi with phi(2t) = phi(t)^2 + c,
    fitted on t_j = j / 2^m by pulling phi(2 t_j) back through the square root
    closest to the current phi(t_j), starting from the unit circle.  Around the
    attracting fixed point the curve is written r = h(angle); quotients use the
    angle-sorted nodes.  With ``L`` given the fitted nodes must lie in its cells.
    """
    if not isinstance(f, Quadratic):
        raise PreconditionError("curve fitting needs a quadratic map")
    if L is not None and L.type_uv is not None and tuple(L.type_uv) != (2, 0):
        raise PreconditionError(f"type {tuple(L.type_uv)} is not (2, 0)")
    c = complex(f.c)
    N = 2**m
    j = np.arange(N)
    phi = np.exp(2j * np.pi * j / N)
    it = 0
    for it in range(1, max_iter + 1):
        w = np.sqrt(phi[(2 * j) % N] - c)
        new = np.where(np.abs(w - phi) <= np.abs(-w - phi), w, -w)
        step = float(np.max(np.abs(new - phi)))
        phi = new
        if step < tol:
            break
    else:
        raise NonConvergent(f"conjugacy fit did not settle in {max_iter} iterations (last step {step:.3g})")
    if L is not None:
        inside = L.contains(phi)
        if not inside.all():
            raise PreconditionError(f"{int((~inside).sum())} fitted nodes fall outside the basic set cells")
    v = phi - attracting_fixed_point(c)
    ang = np.angle(v) % (2 * np.pi)
    order = np.argsort(ang, kind="stable")
    a, r = ang[order], np.abs(v)[order]
    da = np.diff(np.concatenate([a, [a[0] + 2 * np.pi]]))
    dr = np.roll(r, -1) - r
    ok = da > 0
    d1 = float(np.max(np.abs(dr[ok]) / da[ok]))
    res = float(np.max(np.abs(phi[(2 * j) % N] - (phi * phi + c))))
    return SmoothnessReport(m, float(np.max(np.abs(v))), d1, float("nan"), res, it)
