"""Cell transition graphs and their recurrent part."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .. import kernels
from ..models import Endomorphism
from .grid import BoxGrid

DEFAULT_BLOAT = 0.5


@dataclass
class TransitionGraph:
    grid: BoxGrid
    adj: csr_matrix
    bloat: float
    samples_per_cell: int
    _rev: csr_matrix = field(default=None, repr=False)

    @property
    def n_edges(self) -> int:
        return int(self.adj.nnz)

    @property
    def reverse(self) -> csr_matrix:
        if self._rev is None:
            self._rev = self.adj.T.tocsr()
        return self._rev

    def successors(self, c: int):
        a = self.adj
        return a.indices[a.indptr[c] : a.indptr[c + 1]]

    def has_edge(self, a: int, b: int) -> bool:
        return bool(np.any(self.successors(a) == b))

    def image_mask(self, cells):
        """Cells reachable in one step from the given cells."""
        m = self.grid.mask(cells).astype(np.int8)
        return (self.adj.T @ m) > 0

    def restrict(self, cells) -> csr_matrix:
        m = self.grid.mask(cells)
        d = csr_matrix((m.astype(np.int8), (np.arange(len(m)), np.arange(len(m)))), shape=self.adj.shape)
        return (d @ self.adj @ d).tocsr()

    def prune(self, cells, max_rounds: int = 64):
        """Iterate V <- {c in V : some successor of c lies in V}.

        Returns ``(V, rounds, stabilized)`` where ``stabilized`` tells whether
        the fixed point was reached within ``max_rounds`` removal rounds.
        """
        a, r = self.adj, self.reverse
        mem, rounds, ok = kernels.prune_invariant(
            a.indptr.astype(np.int64),
            a.indices.astype(np.int64),
            r.indptr.astype(np.int64),
            r.indices.astype(np.int64),
            self.grid.mask(cells).astype(np.uint8),
            int(max_rounds),
        )
        return np.asarray(mem).astype(bool), int(rounds), bool(ok)


def image_half_width(grid: BoxGrid, bloat: float) -> float:
    """Box half-width in cell units for a bloat of ``bloat`` cell diameters."""
    return bloat * math.sqrt(grid.manifold.dimension) / 2.0


def build_transition_graph(
    f: Endomorphism,
    g: BoxGrid,
    samples_per_cell: int | None = None,
    bloat: float = DEFAULT_BLOAT,
    threads: int = 1,
) -> TransitionGraph:
    """Edges c -> c' whenever the bloated image of a sample of c meets c'.

    Samples are a centered lattice of ``samples_per_cell`` points per cell; each
    image point is widened to a box of side ``bloat`` cell diameters.
    """
    if f.manifold != g.manifold:
        raise ValueError("grid and model live on different manifolds")
    d = g.manifold.dimension
    if samples_per_cell is not None:
        if samples_per_cell < 4:
            raise ValueError("samples_per_cell must be at least 4")
        s = max(1, int(round(samples_per_cell ** (1.0 / d))))
        if s**d != g.samples_per_cell:
            g_s = BoxGrid(g.manifold, g.n, s)
            X, owner = g_s.cell_samples()
        else:
            X, owner = g.cell_samples()
    else:
        X, owner = g.cell_samples()
    Y = f.eval_raw(X)
    S, T = g.rasterize(Y, owner, image_half_width(g, bloat), threads=threads)
    adj = g.csr(S, T)
    return TransitionGraph(g, adj, bloat, len(X) // max(1, len(np.unique(owner))))


def strong_components(t: TransitionGraph):
    """SCC labels of the transition graph (scipy)."""
    _, labels = connected_components(t.adj, directed=True, connection="strong")
    return labels


def chain_recurrent_cells(t: TransitionGraph):
    """Boolean mask of cells in nontrivial strongly connected components."""
    labels = strong_components(t)
    sizes = np.bincount(labels)
    loops = np.zeros(t.grid.n_cells, dtype=bool)
    diag = t.adj.diagonal() > 0
    loops[diag] = True
    rec = (sizes[labels] > 1) | loops
    rec &= t.grid.active.astype(bool)
    return rec
