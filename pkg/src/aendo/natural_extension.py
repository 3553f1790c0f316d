"""Finite-depth pieces of the inverse limit: preimage trees and backward branches."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import BudgetExceeded
from .geometry import Point, dist_array, from_array, point_from_raw, raw, to_array
from .models import Endomorphism, evaluate

DEFAULT_NODE_BUDGET = 1_000_000
DEFAULT_DEPTH = 24


@dataclass(frozen=True)
class BackwardBranch:
    """Points (x_0, x_-1, ..., x_-N) with f(x_-(i+1)) = x_-i."""

    points: tuple

    def __post_init__(self):
        if not self.points:
            raise ValueError("a branch holds at least its root")
        object.__setattr__(self, "points", tuple(self.points))

    @property
    def depth(self) -> int:
        return len(self.points) - 1

    @property
    def root(self) -> Point:
        return self.points[0]

    @property
    def manifold(self):
        return self.points[0].manifold

    def as_array(self):
        return to_array(list(self.points))

    @classmethod
    def from_raw(cls, m, X) -> "BackwardBranch":
        return cls(tuple(from_array(m, X)))

    def truncate(self, n: int) -> "BackwardBranch":
        return BackwardBranch(self.points[: n + 1])


def sorted_children(f: Endomorphism, Q):
    """Preimages of many raw points, deduplicated and sorted per parent.

    Returns ``(P, parent)`` where ``P`` lists children grouped by parent in
    lexicographic order and ``parent[i]`` indexes the row of ``Q``.
    """
    P, mask = f.preimages_bulk(Q)
    n, k = mask.shape
    row = np.repeat(np.arange(n), k).reshape(n, k)
    if f.manifold.is_torus:
        keys = [P[..., j][mask] for j in range(f.manifold.dimension)]
    else:
        z = P[mask]
        inf = np.isinf(z.real) | np.isinf(z.imag)
        keys = [np.where(inf, np.inf, z.real), np.where(inf, np.inf, z.imag)]
    r = row[mask]
    order = np.lexsort(tuple(keys[::-1]) + (r,))
    return P[mask][order], r[order]


class PreimageTree:
    """Preimage tree of depth N rooted at x.

    A tree built by :func:`grow_preimage_tree` stores every level.  A lazy tree
    (``PreimageTree.lazy``) only records the root and depth; searches such as
    :func:`branch_within` then expand children on demand, which keeps deep
    in-set searches cheap when the full tree would be astronomically large.
    """

    def __init__(self, f: Endomorphism, root: Point, depth: int, levels=None, parents=None):
        if depth < 0:
            raise ValueError("depth must be nonnegative")
        self.f = f
        self.root = root
        self.depth = depth
        self.levels = levels
        self.parents = parents

    @classmethod
    def lazy(cls, f, root, depth):
        return cls(f, root, depth)

    @property
    def materialized(self) -> bool:
        return self.levels is not None

    def children_raw(self, x):
        return self.f.preimages_raw(x)

    def children(self, level: int, index: int) -> list[Point]:
        """Children of node ``index`` at level -``level`` of a stored tree."""
        if not self.materialized:
            raise ValueError("children by index need a materialized tree")
        if level >= self.depth:
            return []
        sel = np.nonzero(self.parents[level + 1] == index)[0]
        return from_array(self.f.manifold, self.levels[level + 1][sel])

    @property
    def leaf_count(self) -> int:
        if not self.materialized:
            raise ValueError("leaf count needs a materialized tree")
        return len(self.levels[-1])


def grow_preimage_tree(f: Endomorphism, x: Point, N: int, budget: int = DEFAULT_NODE_BUDGET) -> PreimageTree:
    if N < 0:
        raise ValueError("depth must be nonnegative")
    if f.degree ** N > budget:
        raise BudgetExceeded(f"degree^N = {f.degree}^{N} exceeds the node budget {budget}")
    X = np.array([raw(x)]) if f.manifold.is_sphere else raw(x)[None, :]
    levels = [X]
    parents = [np.zeros(1, dtype=np.int64) - 1]
    for _ in range(N):
        P, par = sorted_children(f, levels[-1])
        levels.append(P)
        parents.append(par)
    return PreimageTree(f, x, N, levels, parents)


def enumerate_branches(t: PreimageTree) -> list[BackwardBranch]:
    if not t.materialized:
        raise ValueError("enumerate_branches needs a materialized tree")
    m = t.f.manifold
    paths = np.arange(len(t.levels[-1]))[:, None]
    idx = paths[:, 0]
    cols = [idx]
    for lvl in range(t.depth, 0, -1):
        idx = t.parents[lvl][idx]
        cols.append(idx)
    cols = cols[::-1]
    out = []
    for b in range(len(t.levels[-1])):
        pts = [t.levels[i][cols[i][b]] for i in range(t.depth + 1)]
        out.append(BackwardBranch(tuple(point_from_raw(m, p) for p in pts)))
    return out


def branch_within(
    t: PreimageTree,
    member: Callable,
    *,
    raw_member: bool = False,
    visit_budget: int = DEFAULT_NODE_BUDGET,
) -> Optional[BackwardBranch]:
    """Deepest branch whose points all satisfy ``member``, found depth first.

    Children are tried in sorted order, so the first branch of maximal depth
    wins ties.  Returns None when no level -1 child qualifies.  When
    ``raw_member`` is set the predicate receives raw coordinates instead of
    :class:`Point` values.  If the visit budget runs out the deepest branch
    seen so far is returned.
    """
    f = t.f
    m = f.manifold

    def ok(xr):
        return member(xr) if raw_member else member(point_from_raw(m, xr))

    root = raw(t.root)
    path = [root]
    stack = [iter(_filtered(t, root, ok))] if t.depth > 0 else []
    best = [root]
    visits = 0
    while stack:
        nxt = next(stack[-1], None)
        if nxt is None:
            stack.pop()
            path.pop()
            continue
        visits += 1
        path.append(nxt)
        if len(path) > len(best):
            best = list(path)
            if len(best) == t.depth + 1:
                break
        if visits >= visit_budget:
            break
        stack.append(iter(_filtered(t, nxt, ok)) if len(path) <= t.depth else iter(()))
    if len(best) == 1 and t.depth > 0:
        return None
    return BackwardBranch(tuple(point_from_raw(m, p) for p in best))


def _filtered(t, x, ok):
    for c in t.children_raw(x):
        if ok(c):
            yield c


def extend_branch(f: Endomorphism, b: BackwardBranch, choice: int = 0) -> BackwardBranch:
    """Append the ``choice``-th sorted preimage of the deepest point."""
    kids = f.preimages_raw(raw(b.points[-1]))
    return BackwardBranch(b.points + (point_from_raw(f.manifold, kids[choice]),))


def shift_forward(f: Endomorphism, b: BackwardBranch) -> BackwardBranch:
    head = evaluate(f, b.points[0])
    return BackwardBranch((head,) + b.points[:-1]) if b.depth > 0 else BackwardBranch((head,))


def shift_backward(f: Endomorphism, b: BackwardBranch, y: Point, tol: float = 1e-9) -> BackwardBranch:
    """Inverse shift: drop x_0 and append a preimage y of the deepest point."""
    if dist_array(f.manifold, raw(evaluate(f, y)), raw(b.points[-1])) >= tol:
        raise ValueError("y is not a preimage of the deepest branch point")
    return BackwardBranch(b.points[1:] + (y,))


def branch_distance(b1: BackwardBranch, b2: BackwardBranch) -> float:
    if b1.depth != b2.depth:
        raise ValueError(f"branch depths differ ({b1.depth} vs {b2.depth})")
    if b1.manifold != b2.manifold:
        raise ValueError("branches live on different manifolds")
    return float(np.max(dist_array(b1.manifold, b1.as_array(), b2.as_array())))


def is_compatible(f: Endomorphism, b: BackwardBranch, tol: float = 1e-9) -> bool:
    X = b.as_array()
    if b.depth == 0:
        return True
    return bool(np.all(dist_array(f.manifold, f.eval_raw(X[1:]), X[:-1]) < tol))
