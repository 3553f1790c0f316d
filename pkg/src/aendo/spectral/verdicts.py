"""Attractor, repeller, expansion and axiom A verdicts on cell-resolution basic sets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import AendoError, EmptyDisk, NonConvergent, PointOutside, PreconditionError, SingularPointError
from ..geometry import Point, dist_array, is_infinite, to_array
from ..hyperbolic import estimate_splitting, restricted_singular_values, verify_hyperbolic
from ..localmanifolds import grow_unstable_disk
from ..models import Endomorphism, regular_mask
from ..natural_extension import sorted_children
from .graph import TransitionGraph, build_transition_graph, chain_recurrent_cells
from .grid import BoxGrid
from .periodic import periodic_points, periodic_points_raw
from .sets import BasicSetApprox, decompose_basic_sets, in_set_branches, sample_in_set

DEFAULT_EPS = (0.2, 0.1, 0.05, 0.025)
RESOLUTION_DIAMETERS = 4.0


def _graph(L: BasicSetApprox, f: Endomorphism) -> TransitionGraph:
    if L.graph is None:
        L.graph = build_transition_graph(f, L.grid)
    return L.graph


def distance_to_cells(g: BoxGrid, cells, X):
    """Distance from raw points to the union of the given cells.

    Exact box distance on tori; on the sphere the distance to the nearest
    cell sample minus the sample cover radius (a lower estimate).
    """
    m = g.mask(cells)
    ids = np.nonzero(m)[0]
    X = np.asarray(X)
    if len(ids) == 0:
        return np.full(len(X), np.inf)
    if g.manifold.is_sphere:
        S, _ = g.cell_samples(ids)
        d, _ = g.kdtree(S).query(g.embed(X))
        return np.maximum(d - g.sample_cover_radius, 0.0)
    C = g.centers(ids)
    tree = g.kdtree(C)
    k = min(len(ids), 2 ** (g.manifold.dimension + 2))
    _, nn = tree.query(g.embed(X), k=k)
    nn = np.atleast_2d(nn).reshape(len(X), -1)
    D = np.abs(X[:, None, :] - C[nn])
    D = np.minimum(D, 1.0 - D)
    D = np.maximum(D - g.h / 2, 0.0)
    return np.sqrt((D**2).sum(axis=-1)).min(axis=1)


# -- attractor test ------------------------------------------------------------------------

@dataclass
class AttractorVerdict:
    verdict: str  # attractor | neither | inconclusive
    per_eps: list
    depth: int
    containment_bloat: float
    witness: dict | None = None

    @property
    def is_attractor(self) -> bool:
        return self.verdict == "attractor"


def classify_attractor(
    f: Endomorphism,
    L: BasicSetApprox,
    eps_list: Sequence[float] = DEFAULT_EPS,
    depth: int = 24,
    n_test: int = 10,
    n_disk: int = 200,
    seed: int = 0,
) -> AttractorVerdict:
    """Do local unstable disks of in-set points stay inside the set?

    attractor if at some resolved eps (eps > 4 cell diameters) every disk
    sample lies in the set's cells fattened by one cell; neither if at every
    eps some disk sample is more than one cell diameter away from the set;
    inconclusive otherwise.  Below the resolution cutoff a disk of any
    dimension fits in the containment band, so containment there says nothing
    (unless the fattened set is the whole grid).
    """
    if L.size == 0:
        raise PreconditionError("empty basic set")
    g = L.grid
    fat = g.fatten(L.mask, 1)
    # with nothing outside the fattened set, containment is meaningful at every eps
    everywhere = bool(np.all(fat[g.active_ids]))
    branches = in_set_branches(f, L, n_test, depth, seed)
    per_eps = []
    witness = None
    for eps in eps_list:
        contained = True
        worst = 0.0
        wit = None
        used = 0
        for b in branches:
            try:
                disk = grow_unstable_disk(f, b, eps, n_disk)
            except (EmptyDisk, AendoError):
                continue
            used += 1
            Y = disk.raw_samples
            inside = fat[g.cell_of(Y)]
            if not inside.all():
                contained = False
            esc = distance_to_cells(g, L.mask, Y)
            j = int(np.argmax(esc))
            if esc[j] > worst:
                worst = float(esc[j])
                wit = {"base": repr(b.root), "sample": repr(disk.samples[j]), "escape": worst}
        escaped = worst > g.diameter
        per_eps.append(
            {
                "eps": float(eps),
                "resolved": bool(everywhere or eps > RESOLUTION_DIAMETERS * g.diameter),
                "disks": used,
                "contained": bool(contained and used > 0),
                "max_escape": worst,
                "escape_witness": escaped,
            }
        )
        if escaped and witness is None:
            witness = dict(wit, eps=float(eps))
    if any(r["contained"] and r["resolved"] for r in per_eps):
        verdict = "attractor"
    elif per_eps and all(r["escape_witness"] for r in per_eps):
        verdict = "neither"
    else:
        verdict = "inconclusive"
    out = AttractorVerdict(verdict, per_eps, depth, g.diameter, witness)
    L.evidence["attractor"] = {"verdict": verdict, "per_eps": per_eps, "depth": depth, "witness": witness}
    return out


# -- repeller test ------------------------------------------------------------------------

@dataclass
class RepellerVerdict:
    repeller: bool
    fattening: int | None
    per_r: list


def classify_repeller(
    f: Endomorphism, L: BasicSetApprox, fattenings: int = 3, max_rounds: int = 64
) -> RepellerVerdict:
    """Cell-level repeller test over neighborhoods U = L fattened by r cells.

    (i) cl U inside f(U): every sample of every U cell has a preimage in U;
    (ii) iterating V <- {c in V : c has a successor in V} from U stabilizes
    within ``max_rounds`` rounds, strictly shrinks U and ends inside L
    fattened by one cell.  The one-cell slack matches the containment bloat
    of the attractor test: bloated edges let transient cells next to L keep
    a path into L forever.
    """
    g = L.grid
    t = _graph(L, f)
    per_r = []
    found = None
    near = g.fatten(L.mask, 1)
    for r in range(1, fattenings + 1):
        U = g.fatten(L.mask, r)
        Q, _ = g.cell_samples(np.nonzero(U)[0])
        P, par = sorted_children(f, Q)
        hit = np.zeros(len(Q), dtype=bool)
        hit[par[U[g.cell_of(P)]]] = True
        cond_i = bool(hit.all())
        V, rounds, stable = t.prune(U, max_rounds)
        cond_ii = bool(stable and rounds > 0 and not np.any(V & ~near))
        per_r.append(
            {
                "r": r,
                "cells": int(U.sum()),
                "covered": cond_i,
                "uncovered_samples": int((~hit).sum()),
                "shrinks_to_set": cond_ii,
                "rounds": rounds,
                "residual_cells": int((V & ~L.mask).sum()),
            }
        )
        if cond_i and cond_ii and found is None:
            found = r
    out = RepellerVerdict(found is not None, found, per_r)
    L.evidence["repeller"] = {"repeller": out.repeller, "fattening": found, "per_r": per_r}
    return out


# -- expansion ---------------------------------------------------------------------------------

@dataclass
class MetricExpansion:
    mu: float
    pairs: int
    eps: float
    expanding: bool


def verify_expanding_metric(
    f: Endomorphism, L: BasicSetApprox, eps: float = 0.05, n_pairs: int = 2000, seed: int = 0, n_points: int = 1500
) -> MetricExpansion:
    """min rho(f x, f y) / rho(x, y) over sampled in-set pairs closer than eps."""
    g = L.grid
    X = sample_in_set(f, L, n_points, seed)
    if len(X) < 2:
        raise PreconditionError("not enough in-set points for pair sampling")
    tree = g.kdtree(X)
    pairs = np.array(sorted(tree.query_pairs(eps)), dtype=np.int64).reshape(-1, 2)
    if len(pairs):
        d0 = dist_array(f.manifold, X[pairs[:, 0]], X[pairs[:, 1]])
        pairs = pairs[(d0 < eps) & (d0 > 1e-12)]
    if len(pairs) == 0:
        raise PreconditionError(f"no in-set pairs closer than eps = {eps}")
    if len(pairs) > n_pairs:
        rng = np.random.default_rng(seed)
        pairs = pairs[np.sort(rng.choice(len(pairs), n_pairs, replace=False))]
    A, B = X[pairs[:, 0]], X[pairs[:, 1]]
    ratio = dist_array(f.manifold, f.eval_raw(A), f.eval_raw(B)) / dist_array(f.manifold, A, B)
    mu = float(ratio.min())
    out = MetricExpansion(mu, len(pairs), float(eps), mu > 1.0 + 1e-3)
    L.evidence["metric_expansion"] = {"mu": mu, "pairs": len(pairs), "eps": float(eps), "expanding": out.expanding}
    return out


@dataclass
class DerivativeExpansion:
    C: float
    lambda_: float
    samples: int
    expanding: bool


def verify_expanding_derivative(
    f: Endomorphism, L: BasicSetApprox, horizon: int = 16, n_samples: int = 24, seed: int = 0, depth: int = 24
) -> DerivativeExpansion:
    """Fit ||Df^n v|| >= C lambda^n ||v|| for v in the estimated Eu along in-set branches."""
    branches = in_set_branches(f, L, n_samples, depth, seed)
    runs = []
    for b in branches:
        sp = estimate_splitting(f, b)
        if sp.dims[0] == 0:
            continue
        _, smin = restricted_singular_values(f, b.as_array()[0], sp.eu_frame, horizon)
        runs.append(smin)
    if not runs:
        raise PreconditionError("no sample has a nontrivial unstable bundle")
    S = np.array(runs)
    lam = float(np.min(S[:, -1]) ** (1.0 / horizon))
    k = np.arange(horizon + 1)
    C = float(np.min(S / lam**k))
    out = DerivativeExpansion(C, lam, len(runs), lam > 1.0 + 1e-3)
    L.evidence["derivative_expansion"] = {"C": C, "lambda": lam, "samples": len(runs), "expanding": out.expanding}
    return out


def injectivity_scale(f: Endomorphism, L: BasicSetApprox, n_pairs: int = 500, seed: int = 0) -> float:
    """Smallest distance between distinct preimages of f(x) over sampled in-set x.

    Points closer than this never share an image, so it is the largest scale
    below which f is injective on the sampled set.
    """
    X = sample_in_set(f, L, n_pairs, seed)
    if len(X) == 0:
        raise PreconditionError("no in-set points")
    if not np.all(regular_mask(f, X)):
        raise SingularPointError("singular point among the sampled set points")
    Q = f.eval_raw(X)
    P, mask = f.preimages_bulk(Q)
    best = np.inf
    k = mask.shape[1]
    for i in range(k):
        for j in range(i + 1, k):
            ok = mask[:, i] & mask[:, j]
            if ok.any():
                d = dist_array(f.manifold, P[ok, i], P[ok, j])
                d = d[d > 1e-12]
                if len(d):
                    best = min(best, float(d.min()))
    return best


def check_preimage_purity(f: Endomorphism, L: BasicSetApprox, r: int = 3, n: int = 500, seed: int = 0) -> bool:
    """No preimage of a sampled point of the set lands in U minus the set (U = r-fattening)."""
    g = L.grid
    U = g.fatten(L.mask, r)
    X = sample_in_set(f, L, n, seed)
    P, _ = sorted_children(f, X)
    c = g.cell_of(P)
    bad = U[c] & ~L.mask[c]
    L.evidence["purity"] = {"r": r, "points": len(X), "impure_preimages": int(bad.sum())}
    return not bool(bad.any())


def omega_limit(
    f: Endomorphism,
    x: Point,
    decomposition: Sequence[BasicSetApprox],
    burn_in: int = 0,
    tail: int = 64,
    budget: int = 4096,
) -> int:
    """Index (into ``decomposition``) of the basic set absorbing the orbit of x."""
    if not decomposition:
        raise PreconditionError("empty decomposition")
    g = decomposition[0].grid
    owner = np.full(g.n_cells, -1)
    for i, L in enumerate(decomposition):
        owner[L.cells] = i
    y = to_array([x])
    for _ in range(burn_in):
        y = f.eval_raw(y)
    run, cur = 0, -2
    for _ in range(budget):
        c = int(owner[g.cell_of(y)[0]])
        if c >= 0 and c == cur:
            run += 1
        else:
            cur, run = c, (1 if c >= 0 else 0)
        if run >= tail:
            return cur
        y = f.eval_raw(y)
    raise NonConvergent(f"orbit did not settle in one basic set within {budget} steps")


def basin_labels(
    f: Endomorphism, decomposition: Sequence[BasicSetApprox], tail: int = 64, budget: int = 4096
):
    """Per-cell omega_limit index of the cell centres (-1: unsettled or inactive).

    Vectorized form of :func:`omega_limit` with ``burn_in`` 0, run on the
    centre of every active cell at once.
    """
    if not decomposition:
        raise PreconditionError("empty decomposition")
    g = decomposition[0].grid
    owner = np.full(g.n_cells, -1)
    for i, L in enumerate(decomposition):
        owner[L.cells] = i
    ids = g.active_ids
    y = g.centers(ids)
    label = np.full(len(ids), -1)
    cur = np.full(len(ids), -2)
    run = np.zeros(len(ids), dtype=np.int64)
    live = np.ones(len(ids), dtype=bool)
    for _ in range(budget):
        if not live.any():
            break
        c = owner[g.cell_of(y[live])]
        same = (c >= 0) & (c == cur[live])
        run[live] = np.where(same, run[live] + 1, (c >= 0).astype(np.int64))
        cur[live] = c
        done = np.zeros(len(ids), dtype=bool)
        done[live] = run[live] >= tail
        label[done] = cur[done]
        live &= ~done
        y[live] = f.eval_raw(y[live])
    out = np.full(g.n_cells, -1)
    out[ids] = label
    return out


def uniform_margin(K, U_cells, g: BoxGrid) -> float:
    """min over x in K of the distance from x to the complement of the U cells."""
    X = to_array(list(K)) if len(K) and isinstance(K[0], Point) else np.asarray(K)
    U = g.mask(U_cells)
    if not np.all(U[g.cell_of(X)]):
        raise PointOutside("a point of K lies outside the given cells")
    comp = g.active.astype(bool) & ~U
    if not comp.any():
        return float("inf")
    return float(distance_to_cells(g, comp, X).min())


# -- axiom A ---------------------------------------------------------------------------------------

def periodic_density(g: BoxGrid, cells, P) -> float:
    """Fraction of the cells lying within one cell diameter of a point of P."""
    ids = np.nonzero(g.mask(cells))[0]
    if len(ids) == 0:
        return 1.0
    P = np.asarray(P)
    if len(P) == 0:
        return 0.0
    near = np.zeros(len(ids), dtype=bool)
    if g.manifold.is_torus:
        C = g.centers(ids)
        tree = g.kdtree(P)
        k = min(len(P), 8)
        _, nn = tree.query(C, k=k)
        nn = np.atleast_2d(nn).reshape(len(ids), -1)
        D = np.abs(C[:, None, :] - P[nn])
        D = np.minimum(D, 1.0 - D)
        D = np.maximum(D - g.h / 2, 0.0)
        near = np.sqrt((D**2).sum(axis=-1)).min(axis=1) <= g.diameter
    else:
        d, _ = g.kdtree(P).query(g.embed(g.centers(ids)))
        near = d - g.diameter / 2 <= g.diameter
    return float(near.mean())


def verify_axiom_a(
    f: Endomorphism,
    g: BoxGrid,
    max_period: int = 8,
    t: TransitionGraph | None = None,
    decomposition: Sequence[BasicSetApprox] | None = None,
    n_branches: int = 8,
    seed: int = 0,
    density_threshold: float = 0.99,
) -> dict:
    """Evidence for axiom A: no singular point among the recurrent cells,
    periodic points of period <= ``max_period`` near every recurrent cell
    (fraction at least ``density_threshold``) and a hyperbolic estimate on
    every class."""
    t = t or build_transition_graph(f, g)
    rec = chain_recurrent_cells(t)

    # (a) singular points inside recurrent cells
    sing = []
    for p in f.singular_points():
        P = to_array([p])
        if rec[g.cell_of(P)[0]]:
            sing.append(repr(p))
    X, owner = g.cell_samples(np.nonzero(rec)[0])
    fin = ~is_infinite(X) if f.manifold.is_sphere else np.ones(len(X), dtype=bool)
    sampled = int((~regular_mask(f, X[fin])).sum()) if fin.any() else 0
    singular_ok = not sing and sampled == 0

    # (b) density of periodic points
    complete = True
    parts = []
    for p in range(1, max_period + 1):
        s = periodic_points(f, p, g)
        complete &= s.complete
        if s.points:
            parts.append(s.as_array(f.manifold))
    P = np.concatenate(parts) if parts else np.empty(0)
    if f.manifold.is_sphere and len(P):
        P = P[~is_infinite(P)]
    density = periodic_density(g, rec, P)

    # (c) hyperbolicity of each class
    if decomposition is None:
        decomposition = decompose_basic_sets(t, rec)
    hyp = []
    for L in decomposition:
        rec_L = {"set": L.index, "cells": L.size}
        try:
            est = verify_hyperbolic(f, in_set_branches(f, L, n_branches, seed=seed))
            rec_L.update(hyperbolic=bool(est.hyperbolic), C=est.C, **{"lambda": est.lambda_})
        except AendoError as e:
            rec_L.update(hyperbolic=False, error=type(e).__name__, detail=str(e))
        hyp.append(rec_L)
    report = {
        "singular_check": {"passed": singular_ok, "singular_points_in_recurrent_cells": sing, "sampled_singular": sampled},
        "periodic_density": {"max_period": max_period, "periodic_points": int(len(P)), "fraction": density, "complete": bool(complete)},
        "hyperbolicity": hyp,
        "recurrent_cells": int(rec.sum()),
    }
    report["periodic_density"]["threshold"] = float(density_threshold)
    report["axiom_a"] = bool(singular_ok and density >= density_threshold and all(h["hyperbolic"] for h in hyp))
    return report
