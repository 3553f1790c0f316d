# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled grid kernels; see _kernels_py for the reference semantics."""

import numpy as np
from libc.stdint cimport int64_t, uint8_t


def rasterize(src, lo, hi, base, int N, bint periodic, active):
    cdef const int64_t[::1] s = np.ascontiguousarray(src, dtype=np.int64)
    cdef const int64_t[:, ::1] L = np.ascontiguousarray(lo, dtype=np.int64)
    cdef const int64_t[:, ::1] H = np.ascontiguousarray(hi, dtype=np.int64)
    cdef const int64_t[::1] B = np.ascontiguousarray(base, dtype=np.int64)
    cdef const uint8_t[::1] act = np.ascontiguousarray(active, dtype=np.uint8)
    cdef Py_ssize_t n = L.shape[0]
    cdef Py_ssize_t d = L.shape[1]
    cdef Py_ssize_t i, k, m = 0, cap = 0, vol
    cdef int64_t lo3[3]
    cdef int64_t hi3[3]
    cdef int64_t a, b, c, ia, ib, ic, cid
    for i in range(n):
        vol = 1
        for k in range(d):
            vol *= H[i, k] - L[i, k] + 1
        cap += vol
    out_s = np.empty(cap, dtype=np.int64)
    out_t = np.empty(cap, dtype=np.int64)
    cdef int64_t[::1] os = out_s
    cdef int64_t[::1] ot = out_t
    with nogil:
        for i in range(n):
            for k in range(3):
                if k < d:
                    lo3[k] = L[i, k]
                    hi3[k] = H[i, k]
                else:
                    lo3[k] = 0
                    hi3[k] = 0
            for c in range(lo3[2], hi3[2] + 1):
                ic = c
                if periodic:
                    ic = ((c % N) + N) % N
                elif c < 0 or c >= N:
                    continue
                for b in range(lo3[1], hi3[1] + 1):
                    ib = b
                    if periodic:
                        ib = ((b % N) + N) % N
                    elif b < 0 or b >= N:
                        continue
                    for a in range(lo3[0], hi3[0] + 1):
                        ia = a
                        if periodic:
                            ia = ((a % N) + N) % N
                        elif a < 0 or a >= N:
                            continue
                        cid = B[i] + ia + N * (ib + N * ic)
                        if act[cid]:
                            os[m] = s[i]
                            ot[m] = cid
                            m += 1
    return out_s[:m], out_t[:m]


def prune_invariant(indptr, indices, rindptr, rindices, member, int max_rounds):
    cdef const int64_t[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const int64_t[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef const int64_t[::1] rp = np.ascontiguousarray(rindptr, dtype=np.int64)
    cdef const int64_t[::1] rx = np.ascontiguousarray(rindices, dtype=np.int64)
    out = np.array(member, dtype=np.uint8, copy=True)
    cdef uint8_t[::1] mem = out
    cdef Py_ssize_t n = ip.shape[0] - 1
    cnt_arr = np.zeros(n, dtype=np.int64)
    q1 = np.empty(n, dtype=np.int64)
    q2 = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] cnt = cnt_arr
    cdef int64_t[::1] cur = q1
    cdef int64_t[::1] nxt = q2
    cdef int64_t[::1] tmp
    cdef Py_ssize_t v, j, p, ncur = 0, nnext
    cdef int rounds = 0
    with nogil:
        for v in range(n):
            if mem[v]:
                for j in range(ip[v], ip[v + 1]):
                    if mem[ix[j]]:
                        cnt[v] += 1
                if cnt[v] == 0:
                    cur[ncur] = v
                    ncur += 1
        while ncur > 0 and rounds < max_rounds:
            rounds += 1
            for j in range(ncur):
                mem[cur[j]] = 0
            nnext = 0
            for j in range(ncur):
                v = cur[j]
                for p in range(rp[v], rp[v + 1]):
                    if mem[rx[p]]:
                        cnt[rx[p]] -= 1
                        if cnt[rx[p]] == 0:
                            nxt[nnext] = rx[p]
                            nnext += 1
            tmp = cur
            cur = nxt
            nxt = tmp
            ncur = nnext
    return out, rounds, ncur == 0
