"""Pure numpy versions of the compiled kernels (same signatures and results)."""

from __future__ import annotations

import itertools

import numpy as np


def rasterize(src, lo, hi, base, N, periodic, active):
    """Cell pairs (src, dst) for every grid cell inside every index box.

    ``lo``/``hi`` are inclusive per-axis index bounds of shape (n, d), d <= 3.
    Periodic grids wrap indices mod N; otherwise out-of-range indices are
    dropped.  Cells with ``active[id] == 0`` are skipped.
    """
    src = np.asarray(src, dtype=np.int64)
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    base = np.asarray(base, dtype=np.int64)
    n, d = lo.shape
    if n == 0:
        e = np.empty(0, dtype=np.int64)
        return e, e.copy()
    span = int((hi - lo).max()) + 1
    out_s, out_t = [], []
    stride = N ** np.arange(d, dtype=np.int64)
    for off in itertools.product(range(span), repeat=d):
        off = np.array(off, dtype=np.int64)
        idx = lo + off
        ok = np.all(idx <= hi, axis=1)
        if periodic:
            idx = np.mod(idx, N)
        else:
            ok &= np.all((idx >= 0) & (idx < N), axis=1)
        cid = base + idx @ stride
        ok &= active[np.where(ok, cid, 0)] != 0
        out_s.append(src[ok])
        out_t.append(cid[ok])
    return np.concatenate(out_s), np.concatenate(out_t)


def prune_invariant(indptr, indices, rindptr, rindices, member, max_rounds):
    """Repeatedly drop members without a successor inside the member set.

    Returns ``(member, rounds, stabilized)``.  ``rounds`` counts the rounds
    that removed something; ``stabilized`` is False when removals were still
    pending after ``max_rounds`` rounds.  The reverse graph is unused here
    but kept for signature parity with the compiled kernel.
    """
    member = np.asarray(member, dtype=np.uint8).copy().astype(bool)
    indptr = np.asarray(indptr, dtype=np.int64)
    indices = np.asarray(indices, dtype=np.int64)
    n = len(indptr) - 1
    deg = np.diff(indptr)
    rows = np.repeat(np.arange(n), deg)
    rounds = 0
    while True:
        hit = np.zeros(n, dtype=bool)
        live = member[indices]
        hit[rows[live]] = True
        remove = member & ~hit
        if not remove.any():
            return member.astype(np.uint8), rounds, True
        if rounds >= max_rounds:
            return member.astype(np.uint8), rounds, False
        member &= ~remove
        rounds += 1
