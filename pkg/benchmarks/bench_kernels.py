#!/usr/bin/env python3
"""Time the compiled and numpy kernel backends on transition-graph workloads.

Usage: python benchmarks/bench_kernels.py [--grid 256] [--repeat 3]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from aendo import kernels
from aendo.geometry import SPHERE, torus
from aendo.models import Product, Quadratic
from aendo.spectral.graph import build_transition_graph, image_half_width
from aendo.spectral.grid import BoxGrid


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def workloads(n):
    """(name, rasterize args, prune args) for a torus and a sphere model."""
    cases = []
    for name, f, m in (("product torus", Product(2, 0.1), torus(2)), ("quadratic sphere", Quadratic(0.2 + 0.2j), SPHERE)):
        g = BoxGrid(m, n)
        X, owner = g.cell_samples()
        parts, _ = g.boxes(f.eval_raw(X), owner, image_half_width(g, 0.5))
        t = build_transition_graph(f, g)
        a, r = t.adj, t.reverse
        prune = (
            a.indptr.astype(np.int64),
            a.indices.astype(np.int64),
            r.indptr.astype(np.int64),
            r.indices.astype(np.int64),
            g.active.astype(np.uint8),
            64,
        )
        cases.append((name, g, parts, prune))
    return cases


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--grid", type=int, default=256)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)

    impls = kernels.backends()
    print(f"default backend: {kernels.BACKEND}; available: {', '.join(sorted(impls))}")
    print(f"{'workload':<18} {'kernel':<10} " + " ".join(f"{b:>10}" for b in sorted(impls)) + "   speedup")
    for name, g, parts, prune in workloads(args.grid):
        row = {}
        ref = None
        for b, mod in sorted(impls.items()):
            def ras(mod=mod):
                res = [mod.rasterize(s, lo, hi, base, g.n, g.manifold.is_torus, g.active) for s, lo, hi, base in parts]
                return np.unique(np.concatenate([r[0] * g.n_cells + r[1] for r in res]))

            t, out = best_of(ras, args.repeat)
            if ref is None:
                ref = out
            elif not np.array_equal(ref, out):
                raise SystemExit(f"{name}: rasterize backends disagree")
            row.setdefault("rasterize", {})[b] = t
        ref = None
        for b, mod in sorted(impls.items()):
            t, out = best_of(lambda mod=mod: mod.prune_invariant(*prune), args.repeat)
            mem = np.asarray(out[0])
            if ref is None:
                ref = mem
            elif not np.array_equal(ref, mem):
                raise SystemExit(f"{name}: prune backends disagree")
            row.setdefault("prune", {})[b] = t
        for kern, ts in row.items():
            cells = " ".join(f"{ts[b] * 1e3:>8.1f}ms" for b in sorted(ts))
            sp = ts["python"] / ts["cython"] if "cython" in ts else float("nan")
            print(f"{name:<18} {kern:<10} {cells}   {sp:6.1f}x")


if __name__ == "__main__":
    main()
