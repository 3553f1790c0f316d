"""Local stable and unstable manifolds: membership, sampled disks, contraction rates."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BudgetExceeded, EmptyDisk
from .geometry import Point, dist_array, from_array, is_infinite, raw, wrap_array
from .hyperbolic import estimate_splitting, forward_orbit, metric_jacobians, rho
from .models import Endomorphism
from .natural_extension import DEFAULT_NODE_BUDGET, BackwardBranch, sorted_children

EDGE = 1e-12  # strict "< eps" is tested as "< eps - EDGE"


@dataclass(frozen=True)
class LocalDisk:
    kind: str
    base: Point
    branch: Optional[BackwardBranch]
    epsilon: float
    samples: tuple
    depth: int = 0
    raw_samples: np.ndarray = field(default=None, repr=False, compare=False)

    def pca_rank(self, threshold: float = 1e-4) -> int:
        return pca_rank(self.base.manifold, raw(self.base), self.raw_samples, threshold)


def _as_rows(f: Endomorphism, x):
    x = np.asarray(x)
    return x[None, :] if f.manifold.is_torus else np.array([x], dtype=complex)


def displacement(m, x0, X):
    """Chart displacement of raw points X from x0 (torus: shortest representative)."""
    if m.is_torus:
        D = np.asarray(X, dtype=float) - np.asarray(x0, dtype=float)
        return D - np.round(D)
    Z = np.asarray(X, dtype=complex) - complex(x0)
    return np.stack([Z.real, Z.imag], axis=-1)


def offset(m, x0, V):
    """Raw points x0 + V for chart vectors V of shape (n, d)."""
    V = np.asarray(V, dtype=float)
    if m.is_torus:
        return wrap_array(np.asarray(x0, dtype=float) + V)
    return complex(x0) + V[:, 0] + 1j * V[:, 1]


def pca_rank(m, x0, X, threshold: float = 1e-4) -> int:
    if len(X) < 2:
        return 0
    D = displacement(m, x0, X)
    D = D - D.mean(axis=0)
    sv = np.linalg.svd(D, compute_uv=False)
    if sv[0] == 0:
        return 0
    return int(np.sum(sv / sv[0] > threshold))


def in_local_stable(f: Endomorphism, x: Point, y: Point, eps: float, N: int) -> bool:
    if eps <= 0 or N < 1:
        raise ValueError("need eps > 0 and N >= 1")
    X = forward_orbit(f, raw(x), N)
    Y = forward_orbit(f, raw(y), N)
    return bool(np.all(dist_array(f.manifold, X, Y) < eps - EDGE))


def in_local_unstable_bulk(
    f: Endomorphism, xb: BackwardBranch, Y, eps: float, budget: int = DEFAULT_NODE_BUDGET
):
    """Vectorized membership of raw points Y in the local unstable manifold of xb.

    Runs a pruned breadth-first search through the preimage trees of all Y at
    once: a node survives only while it stays within eps of the matching point
    of xb.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    m = f.manifold
    B = xb.as_array()
    Y = np.asarray(Y)
    n = len(Y)
    owner = np.arange(n)
    keep = dist_array(m, Y, B[0]) < eps - EDGE
    front, owner = Y[keep], owner[keep]
    for lvl in range(1, xb.depth + 1):
        if len(front) == 0:
            break
        P, par = sorted_children(f, front)
        ok = dist_array(m, P, B[lvl]) < eps - EDGE
        front, owner = P[ok], owner[par[ok]]
        if len(front) > budget:
            raise BudgetExceeded(f"unstable-manifold search frontier exceeds {budget} nodes")
    out = np.zeros(n, dtype=bool)
    out[owner] = True
    return out


def in_local_unstable(f: Endomorphism, x_branch: BackwardBranch, y: Point, eps: float) -> bool:
    return bool(in_local_unstable_bulk(f, x_branch, _as_rows(f, raw(y)), eps)[0])


def _ball_grid(u: int, n_samples: int):
    """Roughly n_samples points of the closed unit u-ball on a centered grid."""
    if u == 0:
        return np.zeros((1, 0))
    per = max(2, int(round(n_samples ** (1.0 / u))))
    t = np.linspace(-1.0, 1.0, per)
    G = np.array(list(itertools.product(t, repeat=u)))
    return G[np.linalg.norm(G, axis=1) <= 1.0 + 1e-12]


def disk_trajectories(f: Endomorphism, b: BackwardBranch, eps: float, n_samples: int, fwd: int = 16, scale: float = 1e-4):
    """Seed the eps-ball of Eu(x_0), pull it back linearly and push it forward.

    Returns ``(T, L)``: T[j] holds the raw points at level -(L - j), so T[-1]
    are points near x_0 and T[:, i] is the truncated branch of sample i.  The
    pull-back depth L stops once the seed has shrunk below ``scale * eps``,
    which keeps both the linearization error and rounding small.
    """
    m = f.manifold
    sp = estimate_splitting(f, b, fwd)
    u = sp.dims[0]
    B = b.as_array()
    W = eps * _ball_grid(u, n_samples) @ sp.eu_frame.T  # metric-frame vectors at x_0
    if u == 0:
        return np.array([B[:1]]), 0
    L = 0
    Js = metric_jacobians(f, B[1:])
    for lvl in range(b.depth):
        if np.max(np.linalg.norm(W, axis=1)) <= scale * eps:
            break
        W = np.linalg.solve(Js[lvl], W.T).T
        L = lvl + 1
    r = float(rho(f, B[L : L + 1])[0])
    pts = offset(m, B[L], W / r)
    T = [pts]
    for _ in range(L):
        T.append(f.eval_raw(T[-1]))
    return np.array(T), L


def grow_unstable_disk(
    f: Endomorphism, b: BackwardBranch, eps: float, n_samples: int = 400, fwd: int = 16
) -> LocalDisk:
    if eps <= 0:
        raise ValueError("eps must be positive")
    T, _ = disk_trajectories(f, b, eps, n_samples, fwd)
    Y = T[-1]
    if f.manifold.is_sphere:
        Y = Y[~is_infinite(Y)]
    keep = in_local_unstable_bulk(f, b, Y, eps)
    Y = Y[keep]
    if len(Y) == 0:
        raise EmptyDisk(f"no disk sample survives at eps = {eps}, depth {b.depth}")
    return LocalDisk("unstable", b.root, b, eps, tuple(from_array(f.manifold, Y)), b.depth, Y)


def stable_directions(f: Endomorphism, x, fwd: int = 16):
    """Metric-frame basis of Es at raw point x from the forward SVD."""
    from .hyperbolic import chain_product

    Xf = forward_orbit(f, x, fwd)
    _, S, Vt = np.linalg.svd(chain_product(metric_jacobians(f, Xf[:-1])))
    return Vt[S < 1.0].T


def stable_contraction_rate(
    f: Endomorphism, x: Point, pairs: int = 64, eps: float = 0.01, N: int = 10, fwd: int = 16
) -> float:
    """Largest one-step distance ratio over pairs on the stable segment through x."""
    m = f.manifold
    x0 = raw(x)
    Es = stable_directions(f, x0, fwd)
    if Es.shape[1] == 0:
        raise ValueError("the stable bundle is trivial at x")
    r = float(rho(f, _as_rows(f, x0))[0])
    t = np.linspace(-eps, eps, max(2, int(np.ceil(np.sqrt(2 * pairs))) + 1))
    # segments along each stable direction
    P = np.concatenate([offset(m, x0, np.outer(t, Es[:, i]) / r) for i in range(Es.shape[1])])
    I, J = np.triu_indices(len(P), 1)
    I, J = I[:pairs], J[:pairs]
    A, Bp = P[I], P[J]
    worst = 0.0
    for _ in range(N + 1):
        d0 = dist_array(m, A, Bp)
        A, Bp = f.eval_raw(A), f.eval_raw(Bp)
        d1 = dist_array(m, A, Bp)
        ok = d0 > 1e-9
        if np.any(ok):
            worst = max(worst, float(np.max(d1[ok] / d0[ok])))
    return worst


def unstable_backward_contraction(
    f: Endomorphism, b: BackwardBranch, eps: float = 0.01, n_samples: int = 64, fwd: int = 16
) -> float:
    """Largest backward one-step ratio over shadowing branch pairs in the unstable disk."""
    m = f.manifold
    T, L = disk_trajectories(f, b, eps, n_samples, fwd)
    if L == 0:
        raise ValueError("the unstable disk is trivial")
    n = T.shape[1]
    I, J = np.triu_indices(n, 1)
    worst = 0.0
    # T[j] is level -(L - j); step back from level -(L-j) to -(L-j+1)
    for j in range(L, 0, -1):
        d_now = dist_array(m, T[j][I], T[j][J])
        d_back = dist_array(m, T[j - 1][I], T[j - 1][J])
        ok = d_now > 1e-9
        if np.any(ok):
            worst = max(worst, float(np.max(d_back[ok] / d_now[ok])))
    return worst
