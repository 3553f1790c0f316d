"""Box grids on tori and on the Riemann sphere.

Torus T^d: N cells per axis, cell id = i_0 + N i_1 + N^2 i_2 (i_0 is the first
coordinate).  Sphere: two charts, each the square [-1, 1]^2 split into N x N
cells.  Chart 0 uses the coordinate z and owns |z| <= 1; chart 1 uses w = 1/z
and owns |z| > 1.  Cell id = chart * N^2 + iy * N + ix, and one extra cell with
id 2 N^2 holds the point at infinity.  A cell is *active* when its sample
lattice meets the region its chart owns.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from functools import cached_property

import numpy as np
from scipy.sparse import csr_matrix
from scipy.spatial import cKDTree

from .. import kernels
from ..geometry import INF, ManifoldSpec, is_infinite, wrap_array


class BoxGrid:
    def __init__(self, manifold: ManifoldSpec, n: int, samples_per_axis: int = 4):
        if n < 1:
            raise ValueError("need at least one cell per axis")
        if samples_per_axis < 1:
            raise ValueError("need at least one sample per axis")
        self.manifold = manifold
        self.n = int(n)
        self.s = int(samples_per_axis)
        d = manifold.dimension
        if manifold.is_torus:
            self.h = 1.0 / n
            self.n_cells = n**d
            self.diameter = math.sqrt(d) * self.h
        else:
            self.h = 2.0 / n  # chart-coordinate cell width
            self.n_cells = 2 * n * n + 1
            # chordal length element is at most 2 |dz|
            self.diameter = 2.0 * math.sqrt(2.0) * self.h

    @property
    def inf_cell(self) -> int:
        if not self.manifold.is_sphere:
            raise AttributeError("only sphere grids have an infinity cell")
        return 2 * self.n * self.n

    @property
    def samples_per_cell(self) -> int:
        return self.s**self.manifold.dimension

    def __repr__(self):
        return f"BoxGrid({self.manifold}, n={self.n}, samples={self.samples_per_cell})"

    # -- point location ----------------------------------------------------------
    def cell_of(self, X):
        """Cell ids of raw points (sphere: -1 never occurs; every point has a cell)."""
        n = self.n
        if self.manifold.is_torus:
            X = wrap_array(np.asarray(X, dtype=float).reshape(-1, self.manifold.dimension))
            idx = np.minimum((X * n).astype(np.int64), n - 1)
            return idx @ (n ** np.arange(self.manifold.dimension, dtype=np.int64))
        Z = np.asarray(X, dtype=complex).ravel()
        inf = is_infinite(Z)
        Zf = np.where(inf, 0, Z)
        outer = np.abs(Zf) > 1.0
        ids = self._chart_ids(Zf, outer)
        if "active" in self.__dict__:
            # near |z| = 1 a point may sit in a cell without samples; use the other chart
            alt = self._chart_ids(Zf, ~outer & (Zf != 0))
            act = self.active
            ids = np.where((act[ids] == 0) & (act[alt] != 0), alt, ids)
        return np.where(inf, self.inf_cell, ids)

    def _chart_ids(self, Zf, outer):
        n = self.n
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            U = np.where(outer, 1.0 / np.where(outer, Zf, 1), Zf)
            U = np.nan_to_num(U)  # 1/z of a subnormal z can come out nan
            ix = np.clip(np.floor((U.real + 1.0) / self.h), 0, n - 1).astype(np.int64)
            iy = np.clip(np.floor((U.imag + 1.0) / self.h), 0, n - 1).astype(np.int64)
        return outer.astype(np.int64) * n * n + iy * n + ix

    # -- samples -------------------------------------------------------------------
    @cached_property
    def _samples(self):
        n, s = self.n, self.s
        t = (np.arange(s) + 0.5) / s
        if self.manifold.is_torus:
            d = self.manifold.dimension
            ids = np.arange(self.n_cells, dtype=np.int64)
            idx = np.stack(np.unravel_index(ids, (n,) * d, order="F"), axis=1)
            offs = np.stack(np.meshgrid(*([t] * d), indexing="ij"), axis=-1).reshape(-1, d)
            X = (idx[:, None, :] + offs[None, :, :]).reshape(-1, d) * self.h
            owner = np.repeat(ids, len(offs))
            return wrap_array(X), owner
        # sphere: lattice in each chart, kept where the chart owns the point
        iy, ix = np.divmod(np.arange(n * n, dtype=np.int64), n)
        ox, oy = np.meshgrid(t, t, indexing="xy")
        offs = (ox + 1j * oy).ravel()
        U = (-1.0 - 1j) + ((ix + 1j * iy)[:, None] + offs[None, :]) * self.h
        U = U.ravel()
        cells = np.repeat(iy * n + ix, len(offs))
        in0 = np.abs(U) <= 1.0
        in1 = (np.abs(U) < 1.0) & (U != 0)
        # cells meeting the unit disk with no lattice sample inside it get one
        # sample near their point closest to the origin, so every point has an active cell
        lo = (-1.0 - 1j) + (ix + 1j * iy) * self.h
        near = np.clip(0.0, lo.real, lo.real + self.h) + 1j * np.clip(0.0, lo.imag, lo.imag + self.h)
        mid = lo + (0.5 + 0.5j) * self.h
        extra = near + 1e-6 * (mid - near)
        has = np.zeros(n * n, dtype=bool)
        has[cells[in1]] = True
        need = ~has & (np.abs(extra) < 1.0) & (extra != 0)
        E, ec = extra[need], (iy * n + ix)[need]
        Z = np.concatenate([U[in0], E, 1.0 / U[in1], 1.0 / E, [INF]])
        owner = np.concatenate([cells[in0], ec, n * n + cells[in1], n * n + ec, [self.inf_cell]])
        order = np.argsort(owner, kind="stable")
        return Z[order], owner[order]

    def cell_samples(self, cells=None):
        """Raw sample points and their owning cell ids (optionally for a subset of cells)."""
        X, owner = self._samples
        if cells is None:
            return X, owner
        keep = self.mask(cells)[owner]
        return X[keep], owner[keep]

    @cached_property
    def active(self):
        act = np.zeros(self.n_cells, dtype=np.uint8)
        act[self._samples[1]] = 1
        return act

    @property
    def active_ids(self):
        return np.nonzero(self.active)[0]

    def mask(self, cells):
        """Boolean membership vector from an id collection or a mask."""
        cells = np.asarray(cells)
        if cells.dtype == bool and cells.shape == (self.n_cells,):
            return cells
        m = np.zeros(self.n_cells, dtype=bool)
        m[cells.astype(np.int64)] = True
        return m

    def centers(self, cells):
        cells = np.asarray(cells, dtype=np.int64)
        n = self.n
        if self.manifold.is_torus:
            d = self.manifold.dimension
            idx = np.stack(np.unravel_index(cells, (n,) * d, order="F"), axis=1)
            return (idx + 0.5) * self.h
        chart, rem = np.divmod(cells, n * n)
        iy, ix = np.divmod(rem, n)
        U = (-1.0 - 1j) + (ix + 0.5 + 1j * (iy + 0.5)) * self.h
        with np.errstate(divide="ignore", invalid="ignore"):
            Z = np.where(chart == 1, 1.0 / U, U)
        return np.where(cells == self.inf_cell, INF, Z)

    # -- rasterization --------------------------------------------------------------
    def boxes(self, Y, src, half_width):
        """Index boxes of half-width ``half_width`` (in cell units) around raw points."""
        n = self.n
        src = np.asarray(src, dtype=np.int64)
        if self.manifold.is_torus:
            Y = np.asarray(Y, dtype=float).reshape(len(src), -1)
            c = Y * n
            lo = np.floor(c - half_width).astype(np.int64)
            hi = np.floor(c + half_width).astype(np.int64)
            return [(src, lo, hi, np.zeros(len(src), dtype=np.int64))], np.empty((2, 0), dtype=np.int64)
        Z = np.asarray(Y, dtype=complex).ravel()
        inf = is_infinite(Z)
        Zf = np.where(inf, 0, Z)
        outer = np.abs(Zf) > 1.0
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            U = np.where(outer, 1.0 / np.where(outer, Zf, 1), Zf)
            U = np.nan_to_num(U)  # 1/z of a subnormal z can come out nan
        U = np.where(inf, 0, U)
        chart = (outer | inf).astype(np.int64)
        r = half_width * self.h
        parts = [self._chart_box(src, U, r, chart)]
        # boxes poking out of the unit disk also cover the other chart
        rim = np.abs(U) + r * math.sqrt(2.0) > 1.0
        if np.any(rim):
            Ur = U[rim]
            Vr = 1.0 / Ur
            rr = r / np.maximum(np.abs(Ur) - r * math.sqrt(2.0), 0.5) ** 2
            parts.append(self._chart_box(src[rim], Vr, rr, 1 - chart[rim]))
        # chart-1 boxes that contain w = 0 also meet the infinity cell
        hit_inf = (chart == 1) & (np.abs(U.real) <= r) & (np.abs(U.imag) <= r)
        extra = np.stack([src[hit_inf], np.full(int(hit_inf.sum()), self.inf_cell)])
        return parts, extra

    def _chart_box(self, src, U, r, chart):
        lo = np.stack([np.floor((U.real - r + 1.0) / self.h), np.floor((U.imag - r + 1.0) / self.h)], axis=1)
        hi = np.stack([np.floor((U.real + r + 1.0) / self.h), np.floor((U.imag + r + 1.0) / self.h)], axis=1)
        lo = np.clip(lo, -1, self.n).astype(np.int64)
        hi = np.clip(hi, -1, self.n).astype(np.int64)
        return (src, lo, hi, chart * self.n * self.n)

    def rasterize(self, Y, src, half_width, threads: int = 1, chunk: int = 1 << 16):
        """Unique (src, dst) cell pairs covered by the boxes around points Y."""
        parts, extra = self.boxes(Y, src, half_width)
        jobs = []
        for s, lo, hi, base in parts:
            for a in range(0, len(s), chunk):
                jobs.append((s[a : a + chunk], lo[a : a + chunk], hi[a : a + chunk], base[a : a + chunk]))
        periodic = self.manifold.is_torus
        act = self.active

        def run(job):
            return kernels.rasterize(job[0], job[1], job[2], job[3], self.n, periodic, act)

        if threads > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                results = list(ex.map(run, jobs))
        else:
            results = [run(j) for j in jobs]
        S = np.concatenate([r[0] for r in results] + [extra[0]])
        T = np.concatenate([r[1] for r in results] + [extra[1]])
        key = np.unique(S * self.n_cells + T)
        return np.divmod(key, self.n_cells)

    def csr(self, S, T) -> csr_matrix:
        data = np.ones(len(S), dtype=np.int8)
        return csr_matrix((data, (S, T)), shape=(self.n_cells, self.n_cells))

    # -- neighborhoods --------------------------------------------------------------
    @cached_property
    def neighbors(self) -> csr_matrix:
        """Cell adjacency (a cell is adjacent to every cell touching it, and to itself)."""
        X, owner = self._samples
        S, T = self.rasterize(X, owner, 0.75)
        A = self.csr(S, T)
        return ((A + A.T) > 0).tocsr()

    def fatten(self, cells, r: int):
        m = self.mask(cells).copy()
        A = self.neighbors
        for _ in range(int(r)):
            m = m | (A @ m.astype(np.int8) > 0)
            m &= self.active.astype(bool)
        return m

    # -- metric helpers ------------------------------------------------------------------
    def embed(self, X):
        """Coordinates in which Euclidean distance is the manifold distance (KD-tree ready)."""
        if self.manifold.is_torus:
            return wrap_array(np.asarray(X, dtype=float).reshape(-1, self.manifold.dimension))
        Z = np.asarray(X, dtype=complex).ravel()
        inf = is_infinite(Z)
        Zf = np.where(inf, 0, Z)
        q = 1.0 + np.abs(Zf) ** 2
        P = np.stack([2 * Zf.real / q, 2 * Zf.imag / q, (np.abs(Zf) ** 2 - 1) / q], axis=1)
        P[inf] = (0.0, 0.0, 1.0)
        return P

    def kdtree(self, X) -> cKDTree:
        if self.manifold.is_torus:
            return cKDTree(self.embed(X), boxsize=1.0)
        return cKDTree(self.embed(X))

    @property
    def sample_cover_radius(self) -> float:
        """Every point of a cell lies within this distance of one of its samples."""
        return self.diameter / (2 * self.s)

    def image_shape(self):
        if self.manifold.is_torus and self.manifold.dimension == 2:
            return (self.n, self.n)
        if self.manifold.is_sphere:
            return (self.n, 2 * self.n)
        raise ValueError(f"no raster layout for {self.manifold}")

    def raster(self, values):
        """Per-cell values laid out as an image (row = second coordinate index).

        Sphere rasters put chart 0 on the left and chart 1 on the right; the
        infinity cell is folded into the chart-1 pixels around w = 0.
        """
        values = np.asarray(values)
        n = self.n
        if self.manifold.is_torus:
            return values.reshape(n, n)
        img = np.concatenate([values[: n * n].reshape(n, n), values[n * n : 2 * n * n].reshape(n, n)], axis=1)
        c = n // 2
        core = img[c - 1 : c + 1, n + c - 1 : n + c + 1]
        img[c - 1 : c + 1, n + c - 1 : n + c + 1] = np.maximum(core, values[self.inf_cell])
        return img
