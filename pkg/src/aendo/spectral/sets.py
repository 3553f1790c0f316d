"""Basic sets at cell resolution: decomposition, in-set sampling and types."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from ..errors import AendoError, NoInSetBranch
from ..geometry import is_infinite, wrap_array
from ..hyperbolic import estimate_splitting
from ..models import Endomorphism, regular_mask
from ..natural_extension import BackwardBranch, PreimageTree, branch_within, sorted_children
from .graph import TransitionGraph, chain_recurrent_cells, strong_components
from .grid import BoxGrid
from .periodic import _dedupe, periodic_points_raw

SUPERMAJORITY = 2.0 / 3.0
DEFAULT_DEPTH = 24


@dataclass
class BasicSetApprox:
    grid: BoxGrid
    cells: np.ndarray  # sorted cell ids
    index: int = 0
    type_uv: Optional[tuple] = None
    classification: str = "inconclusive"
    evidence: dict = field(default_factory=dict)
    graph: Optional[TransitionGraph] = field(default=None, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def size(self) -> int:
        return len(self.cells)

    @property
    def mask(self):
        m = self._cache.get("mask")
        if m is None:
            m = self.grid.mask(self.cells)
            self._cache["mask"] = m
        return m

    def contains(self, X):
        return self.mask[self.grid.cell_of(X)]

    def fraction_of_grid(self) -> float:
        return self.size / int(self.grid.active.sum())


def decompose_basic_sets(
    t: TransitionGraph,
    recurrent=None,
    f: Endomorphism | None = None,
    type_samples: int = 24,
    seed: int = 0,
    merge_adjacent: bool = True,
) -> list[BasicSetApprox]:
    """One basic set per recurrent class, largest first.

    Classes are the nontrivial strong components of the transition graph.
    With ``merge_adjacent`` components whose cells touch are joined: grid
    artifacts such as isolated self-loop cells next to an invariant circle
    would otherwise show up as separate spurious classes.  When ``f`` is given
    each set also receives its type.
    """
    g = t.grid
    rec = chain_recurrent_cells(t) if recurrent is None else g.mask(recurrent)
    labels = strong_components(t)
    ids = np.nonzero(rec)[0]
    if len(ids) == 0:
        return []
    comp, lab = np.unique(labels[ids], return_inverse=True)
    if merge_adjacent and len(comp) > 1:
        N = g.neighbors.tocoo()
        keep = rec[N.row] & rec[N.col]
        remap = np.full(g.n_cells, -1)
        remap[ids] = lab
        a, b = remap[N.row[keep]], remap[N.col[keep]]
        link = coo_matrix((np.ones(len(a)), (a, b)), shape=(len(comp), len(comp)))
        _, group = connected_components(link, directed=False)
        lab = group[lab]
    groups = {}
    for cell, L in zip(ids, lab):
        groups.setdefault(int(L), []).append(int(cell))
    sets = [np.array(sorted(v), dtype=np.int64) for v in groups.values()]
    sets.sort(key=lambda c: (-len(c), int(c[0])))
    out = [BasicSetApprox(g, c, i, graph=t) for i, c in enumerate(sets)]
    if f is not None:
        for L in out:
            try:
                basic_set_type(f, L, n_samples=type_samples, seed=seed)
            except NoInSetBranch as e:
                L.type_uv = None
                L.evidence["type_error"] = str(e)
    return out


# -- sampling points of the set ------------------------------------------------------

def sample_in_set(
    f: Endomorphism,
    L: BasicSetApprox,
    n: int,
    seed: int = 0,
    max_period: int = 6,
    settle: int = 96,
    settle_forward: int = 24,
):
    """Raw points lying on the invariant set inside the cells of ``L``.

    Candidates are periodic points in the cells, forward-settled points whose
    orbit tail stays in the cells, and backward-settled points obtained by
    pulling cell samples back through randomly chosen in-cell preimages.
    Forward settling stays short because expanding coordinates lose one
    mantissa digit per step (float doubling reaches 0 after ~53 steps).
    Singular points are excluded.  Deterministic for a given seed.
    """
    key = ("pts", n, seed, max_period, settle, settle_forward)
    if key in L._cache:
        return L._cache[key]
    g = L.grid
    mem = L.mask
    rng = np.random.default_rng(seed)
    m = f.manifold

    P = periodic_points_raw(f, max_period, g)
    P = P[mem[g.cell_of(P)]] if len(P) else P

    X, owner = g.cell_samples(L.cells)
    pick = np.sort(rng.choice(len(X), size=min(len(X), 4 * n), replace=False))
    X, owner = X[pick], owner[pick]
    # lattice samples are dyadic (they collapse under repeated doubling) and do
    # not change with the seed; jitter them by up to half a lattice spacing,
    # keeping only moves that stay in the sample's cell
    d = g.h / g.s
    if m.is_torus:
        J = wrap_array(X + rng.uniform(-0.5, 0.5, X.shape) * d)
    else:
        # the outer chart w = 1/z stretches lattice spacings by |z|^2
        step = (rng.uniform(-0.5, 0.5, len(X)) + 1j * rng.uniform(-0.5, 0.5, len(X))) * d
        inf = is_infinite(X)
        Xf = np.where(inf, 0, X)
        J = np.where(inf, X, Xf + step * np.maximum(1.0, np.abs(Xf)) ** 2)
    same = g.cell_of(J) == owner
    X = np.where(same[:, None] if X.ndim == 2 else same, J, X)

    # forward settling
    Y = X.copy()
    stay = np.ones(len(Y), dtype=bool)
    for i in range(settle_forward):
        Y = f.eval_raw(Y)
        if i >= settle_forward - 8:
            stay &= mem[g.cell_of(Y)]
    fwd = Y[stay]

    # backward settling with random in-cell preimages
    B = X[~stay]
    for _ in range(settle):
        if len(B) == 0:
            break
        C, par = sorted_children(f, B)
        ok = mem[g.cell_of(C)]
        pri = rng.random(len(C)) + ok * 2.0
        best = np.full(len(B), -1.0)
        choice = np.full(len(B), -1)
        for j in range(len(C)):
            if pri[j] > best[par[j]]:
                best[par[j]], choice[par[j]] = pri[j], j
        good = best >= 2.0
        B = C[choice[good]]
    bwd = B

    parts = [a for a in (P, fwd, bwd) if len(a)]
    if not parts:
        pts = X[:0]
    else:
        pts = np.concatenate(parts)
        bad = is_infinite(pts) if m.is_sphere else np.zeros(len(pts), dtype=bool)
        pts = pts[~bad]
        pts = pts[regular_mask(f, pts)] if len(pts) else pts
        pts = _dedupe(m, pts) if len(pts) else pts
    if len(pts) > n:
        pts = pts[np.sort(rng.choice(len(pts), size=n, replace=False))]
    L._cache[key] = pts
    return pts


def in_set_branch(f: Endomorphism, L: BasicSetApprox, x, depth: int = DEFAULT_DEPTH) -> Optional[BackwardBranch]:
    """Full-depth branch of raw point x through the cells of L, or None."""
    from ..geometry import point_from_raw

    g, mem = L.grid, L.mask

    def member(y):
        return bool(mem[g.cell_of(np.array([y]) if f.manifold.is_sphere else y[None, :])[0]])

    t = PreimageTree.lazy(f, point_from_raw(f.manifold, x), depth)
    b = branch_within(t, member, raw_member=True, visit_budget=20_000)
    if b is None or b.depth < depth:
        return None
    return b


def in_set_branches(f: Endomorphism, L: BasicSetApprox, n: int, depth: int = DEFAULT_DEPTH, seed: int = 0):
    """Up to n sampled in-set points with full-depth in-set branches."""
    key = ("branches", n, depth, seed)
    if key in L._cache:
        return L._cache[key]
    pts = sample_in_set(f, L, max(n, 8), seed)
    out = []
    for x in pts:
        b = in_set_branch(f, L, x, depth)
        if b is not None:
            out.append(b)
        if len(out) >= n:
            break
    if not out:
        raise NoInSetBranch(f"no sampled point of basic set {L.index} has an in-set branch of depth {depth}")
    L._cache[key] = out
    return out


def basic_set_type(f: Endomorphism, L: BasicSetApprox, n_samples: int = 24, seed: int = 0, depth: int = DEFAULT_DEPTH):
    """(dim Eu, dim Es) by a 2/3 supermajority over sampled in-set branches."""
    branches = in_set_branches(f, L, n_samples, depth, seed)
    votes = Counter()
    for b in branches:
        try:
            votes[estimate_splitting(f, b).dims] += 1
        except AendoError:
            votes["invalid"] += 1
    total = sum(votes.values())
    top, count = votes.most_common(1)[0]
    L.evidence["type_votes"] = {str(k): v for k, v in sorted(votes.items(), key=lambda kv: str(kv[0]))}
    if top != "invalid" and count / total >= SUPERMAJORITY:
        L.type_uv = tuple(int(v) for v in top)
        L.evidence["type_inconclusive"] = False
    else:
        L.type_uv = None
        L.evidence["type_inconclusive"] = True
    return L.type_uv
