"""Acceptance suite: one pass/fail test per primary criterion, at the stated tolerances."""

import math

import numpy as np
import pytest

from aendo import cli
from aendo.geometry import SPHERE, dist_array, sphere_point, torus, wrap
from aendo.hyperbolic import adapted_norm, verify_hyperbolic
from aendo.localmanifolds import stable_contraction_rate, unstable_backward_contraction
from aendo.models import CircleMul, Quadratic, TorusLinear
from aendo.natural_extension import (
    BackwardBranch,
    enumerate_branches,
    extend_branch,
    grow_preimage_tree,
    is_compatible,
    shift_backward,
    shift_forward,
)
from aendo.spectral.grid import BoxGrid
from aendo.spectral.sets import in_set_branches
from aendo.spectral.smoothness import attractor_smoothness, repeller_curve_quotients
from aendo.spectral.verdicts import (
    DEFAULT_EPS,
    classify_attractor,
    classify_repeller,
    verify_axiom_a,
    verify_expanding_derivative,
    verify_expanding_metric,
)

from conftest import CAT, by_type, decomposition, zoo_model
from test_models import _oracle_preimages

T1, T2 = torus(1), torus(2)


def _first_branch(f, x, depth):
    b = BackwardBranch((x,))
    for _ in range(depth):
        b = extend_branch(f, b, 0)
    return b


def _branches(f, L, n):
    """n in-set branches with distinct roots, pooling sampling seeds if one seed is short."""
    out, seen = [], set()
    for seed in range(8):
        for b in in_set_branches(f, L, n, seed=seed):
            key = tuple(np.round(np.atleast_1d(b.as_array()[0]).view(float), 12))
            if key not in seen:
                seen.add(key)
                out.append(b)
        if len(out) >= n:
            return out[:n]
    return out


# 1 -------------------------------------------------------------------------------------

def test_spectral_decomposition():
    f, g, t, sets = decomposition("product", 128)
    assert len(sets) == 2
    assert sorted(L.type_uv for L in sets) == [(1, 1), (2, 0)]
    f, g, t, sets = decomposition("torus", 128)
    assert len(sets) == 1
    assert sets[0].size == g.n_cells


# 2 -------------------------------------------------------------------------------------

def test_attractor_both_directions():
    # at 128 cells the default eps sit at most 4.5 cell diameters, too close to
    # the containment band to resolve the repeller; 256 cells resolve every eps
    f, g, t, sets = decomposition("product", 256)
    att = classify_attractor(f, by_type(sets, (1, 1)), (0.05,), depth=24)
    assert att.verdict == "attractor"
    assert att.containment_bloat == pytest.approx(g.diameter)
    rep = classify_attractor(f, by_type(sets, (2, 0)), DEFAULT_EPS, depth=24)
    assert rep.verdict == "neither"
    assert all(r["escape_witness"] for r in rep.per_eps)
    assert rep.witness is not None and rep.witness["escape"] > g.diameter


# 3 -------------------------------------------------------------------------------------

def test_repellers():
    f, g, t, sets = decomposition("product", 128)
    L = by_type(sets, (2, 0))
    v = classify_repeller(f, L, 3)
    assert v.repeller and v.fattening <= 3
    assert verify_expanding_metric(f, L, 0.05).mu >= 1.5

    f, g, t, sets = decomposition("quad0", 128)
    circle = by_type(sets, (2, 0))
    r = np.abs(g.centers(circle.cells))
    assert r.min() > 0.9 and r.max() < 1.1
    v = classify_repeller(f, circle, 3)
    assert v.repeller and v.fattening <= 3
    assert 1.9 <= verify_expanding_metric(f, circle, 0.05).mu <= 2.1


# 4 -------------------------------------------------------------------------------------

def test_smooth_attractor_and_rough_repeller():
    f, g, t, sets = decomposition("forced", 128)
    A = by_type(sets, (1, 1))
    assert classify_attractor(f, A, (0.05,)).verdict == "attractor"
    assert 1.8 <= verify_expanding_derivative(f, A).lambda_ <= 2.2
    q7 = attractor_smoothness(f, A, 7).max_first_quotient
    q10 = attractor_smoothness(f, A, 10).max_first_quotient
    assert 1 / 1.5 <= q10 / q7 <= 1.5

    f, g, t, sets = decomposition("quadc", 128)
    R = by_type(sets, (2, 0))
    assert classify_repeller(f, R, 3).repeller
    q7 = repeller_curve_quotients(f, 7, R).max_first_quotient
    q10 = repeller_curve_quotients(f, 10, R).max_first_quotient
    assert q10 > 3 * q7


# 5 -------------------------------------------------------------------------------------

def test_hyperbolicity_constants_torus():
    f, g, t, sets = decomposition("torus", 64)
    est = verify_hyperbolic(f, in_set_branches(f, sets[0], 24))
    assert est.lambda_ == pytest.approx(2 - math.sqrt(2), abs=1e-4)
    assert est.C == pytest.approx(1.0, abs=1e-4)


# the circle set gets a finer grid: 64 cells carry only 256 lattice samples
ZOO_SETS = [
    ("circle", 256, (1, 0)),
    ("torus", 64, (1, 1)),
    ("product", 128, (1, 1)),
    ("product", 128, (2, 0)),
    ("forced", 128, (1, 1)),
    ("forced", 128, (2, 0)),
    ("quad0", 128, (2, 0)),
    ("quadc", 128, (2, 0)),
    ("quadc", 128, (0, 2)),
]


@pytest.mark.parametrize("name,n,uv", ZOO_SETS, ids=[f"{a}-{c[0]}{c[1]}" for a, _, c in ZOO_SETS])
def test_adapted_norm_one_step(name, n, uv):
    f, g, t, sets = decomposition(name, n)
    bs = _branches(f, by_type(sets, uv), 1000)
    assert len(bs) == 1000
    assert adapted_norm(f, bs).violations(bs) == 0


# 6 -------------------------------------------------------------------------------------

def test_local_manifold_rates():
    f = zoo_model("product")
    assert stable_contraction_rate(f, wrap([0.2, 0.0], T2)) == pytest.approx(1 - 0.2 * math.pi, abs=5e-3)
    c = CircleMul(2)
    assert unstable_backward_contraction(c, _first_branch(c, wrap([0.3], T1), 24)) == pytest.approx(0.5, abs=1e-6)
    A = TorusLinear(CAT)
    r = unstable_backward_contraction(A, _first_branch(A, wrap([0.1, 0.7], T2), 24))
    assert r == pytest.approx(1 / (2 + math.sqrt(2)), abs=1e-3)


# 7 -------------------------------------------------------------------------------------

def test_axiom_a_gate():
    rep = verify_axiom_a(Quadratic(0), BoxGrid(SPHERE, 64), 8)
    assert not rep["axiom_a"]
    assert not rep["singular_check"]["passed"]
    assert len(rep["singular_check"]["singular_points_in_recurrent_cells"]) == 2
    for name in ("product", "torus"):
        f = zoo_model(name)
        rep = verify_axiom_a(f, BoxGrid(f.manifold, 64), 8)
        assert rep["axiom_a"], name
        assert rep["periodic_density"]["fraction"] >= 0.99


# 8 -------------------------------------------------------------------------------------

def test_natural_extension_integrity(rng):
    for name in ("circle", "torus", "product", "quadc"):
        f = zoo_model(name)
        for _ in range(250):
            if f.manifold.is_sphere:
                x = sphere_point(complex(*rng.normal(size=2)))
            else:
                x = wrap(rng.random(f.manifold.dimension), f.manifold)
            b = BackwardBranch((x,))
            for _ in range(int(rng.integers(1, 8))):
                b = extend_branch(f, b, int(rng.integers(f.degree)))
            # forward shift then re-extension by the dropped point is exact
            back = shift_backward(f, shift_forward(f, b), b.points[-1])
            assert back.points == b.points
            # extension then forward shift agrees to rounding
            y = extend_branch(f, b, int(rng.integers(f.degree))).points[-1]
            again = shift_forward(f, shift_backward(f, b, y))
            assert np.all(dist_array(f.manifold, again.as_array(), b.as_array()) < 1e-12)
            assert is_compatible(f, again)

    for name, x, N in (
        ("circle", wrap([0.3], T1), 8),
        ("torus", wrap([0.2, 0.7], T2), 4),
        ("product", wrap([0.4, 0.6], T2), 6),
        ("quadc", sphere_point(0.4 - 0.3j), 6),
    ):
        f = zoo_model(name)
        tree = grow_preimage_tree(f, x, N)
        assert tree.leaf_count == f.degree**N
        assert len(enumerate_branches(tree)) == f.degree**N
        for lev in range(N):
            for i, node in enumerate(tree.levels[lev]):
                kids = tree.levels[lev + 1][tree.parents[lev + 1] == i]
                oracle = _oracle_preimages(f, node)
                assert len(kids) == len(oracle)
                for o in oracle:
                    assert np.min(dist_array(f.manifold, kids, o)) < 1e-9


# 9 -------------------------------------------------------------------------------------

def test_classify_deterministic(tmp_path):
    cfg = tmp_path / "product.cfg"
    cfg.write_text("model = product\nk = 2\namplitude = 0.1\ngrid = 64\nseed = 7\n")
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert cli.main(["classify", "--config", str(cfg), "--out", str(out)]) == 0
        outs.append(out)
    a, b = outs
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    pgms = sorted(p.name for p in a.glob("*.pgm"))
    assert pgms and pgms == sorted(p.name for p in b.glob("*.pgm"))
    for name in pgms:
        assert (a / name).read_bytes() == (b / name).read_bytes()
