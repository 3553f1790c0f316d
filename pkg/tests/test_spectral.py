import math

import numpy as np
import pytest

from aendo.errors import NotAGraph, PointOutside, PreconditionError
from aendo.geometry import INF, SPHERE, sphere_point, torus, wrap
from aendo.models import CircleMul, Product, Quadratic, TorusLinear
from aendo.spectral.graph import build_transition_graph, chain_recurrent_cells
from aendo.spectral.grid import BoxGrid
from aendo.spectral.periodic import periodic_points, periodic_points_raw
from aendo.spectral.sets import BasicSetApprox, decompose_basic_sets
from aendo.spectral.smoothness import attractor_smoothness, repeller_curve_quotients
from aendo.spectral.verdicts import (
    basin_labels,
    check_preimage_purity,
    classify_attractor,
    classify_repeller,
    injectivity_scale,
    omega_limit,
    uniform_margin,
    verify_axiom_a,
    verify_expanding_derivative,
    verify_expanding_metric,
)

from conftest import CAT, by_type, decomposition

T1, T2 = torus(1), torus(2)


# -- grids -----------------------------------------------------------------------------

def test_torus_grid_ids():
    g = BoxGrid(T2, 8)
    assert g.cell_of(np.array([[0.0, 0.0], [0.99, 0.0], [0.0, 0.99], [1.0, 0.5]])).tolist() == [0, 7, 56, 32]
    assert g.diameter == pytest.approx(math.sqrt(2) / 8)
    X, owner = g.cell_samples()
    assert np.array_equal(g.cell_of(X), owner)


def test_sphere_grid_covers_every_point(rng):
    g = BoxGrid(SPHERE, 32)
    X, owner = g.cell_samples()
    assert np.array_equal(g.cell_of(X), owner)
    assert g.cell_of(np.array([INF]))[0] == g.inf_cell
    Z = np.exp(1j * rng.uniform(0, 2 * np.pi, 5000)) * rng.uniform(0.9, 1.1, 5000)
    assert np.all(g.active[g.cell_of(Z)] == 1)
    # subnormal and near-overflow inputs still land in valid cells
    ids = g.cell_of(np.array([-1e-323j, 1e-320 + 0j, 5e307 + 5e307j]))
    assert np.all((ids >= 0) & (ids < g.n_cells))


def test_neighbors_symmetric_and_reflexive():
    for g in (BoxGrid(T2, 16), BoxGrid(SPHERE, 16)):
        A = g.neighbors
        assert (A != A.T).nnz == 0
        act = g.active_ids
        assert np.all(A.diagonal()[act])


# -- transition graphs and recurrence --------------------------------------------------

def test_circle_graph_edges():
    g = BoxGrid(T1, 64)
    t = build_transition_graph(CircleMul(2), g)
    assert set(t.successors(0).tolist()) <= {63, 0, 1, 2}
    assert {0, 1} <= set(t.successors(0).tolist())
    assert chain_recurrent_cells(t).all()


def test_graph_contains_every_sample_image():
    for f, m in ((TorusLinear(CAT), T2), (Quadratic(0.2 + 0.2j), SPHERE)):
        g = BoxGrid(m, 32)
        t = build_transition_graph(f, g)
        X, owner = g.cell_samples()
        dst = g.cell_of(f.eval_raw(X))
        A = t.adj.tocsr()
        assert all(A[s, d] for s, d in zip(owner[::7], dst[::7]))


def test_torus_out_degree():
    g = BoxGrid(T2, 64)
    t = build_transition_graph(TorusLinear(CAT), g)
    assert np.diff(t.adj.indptr).min() >= 2


def test_product_recurrent_rows():
    f, g, t, sets = decomposition("product", 64)
    rec = chain_recurrent_cells(t)
    rows = np.unique(np.nonzero(rec)[0] // 64)
    # rows within two cells of y = 0 and y = 1/2
    assert rows.tolist() == [0, 1, 30, 31, 32, 33, 62, 63]
    assert len(sets) == 2


def test_refinement_monotone():
    f = Product(2, 0.1)
    fine = chain_recurrent_cells(build_transition_graph(f, BoxGrid(T2, 128)))
    coarse = chain_recurrent_cells(build_transition_graph(f, BoxGrid(T2, 64)))
    i = np.nonzero(fine)[0]
    down = (i % 128) // 2 + 64 * ((i // 128) // 2)
    assert coarse[down].all()


def test_quadratic_three_classes():
    f, g, t, sets = decomposition("quad0", 128)
    assert len(sets) == 3
    circle = by_type(sets, (2, 0))
    r = np.abs(g.centers(circle.cells))
    assert r.min() > 0.9 and r.max() < 1.1
    small = [L for L in sets if L is not circle]
    assert any(L.contains(np.array([0j]))[0] for L in small)
    assert any(L.contains(np.array([INF]))[0] for L in small)


def test_types():
    f, g, t, sets = decomposition("product", 128)
    assert sorted(L.type_uv for L in sets) == [(1, 1), (2, 0)]
    f, g, t, sets = decomposition("circle", 64)
    assert [L.type_uv for L in sets] == [(1, 0)]


def test_sets_are_invariant():
    for name, n in (("product", 128), ("forced", 128), ("quad0", 128)):
        f, g, t, sets = decomposition(name, n)
        for L in sets:
            img = t.image_mask(L.cells)
            assert np.all(img[L.cells])


# -- periodic points -------------------------------------------------------------------

def test_periodic_examples():
    assert sorted(p.coords[0] for p in periodic_points(CircleMul(2), 2).points) == pytest.approx([0, 1 / 3, 2 / 3])
    assert [p.coords for p in periodic_points(TorusLinear(CAT), 1).points] == [(0.0, 0.0)]
    zs = periodic_points(Quadratic(0), 1).points
    assert len(zs) == 3 and any(p.at_infinity for p in zs)
    assert sorted(abs(p.z) for p in zs if not p.at_infinity) == pytest.approx([0, 1])


def test_periodic_counts():
    f = TorusLinear(CAT)
    A = np.array(CAT)
    for p in (1, 2, 3, 5):
        D = abs(round(np.linalg.det(np.linalg.matrix_power(A, p) - np.eye(2))))
        assert len(periodic_points(f, p).points) == D
    P = Product(2, 0.1)
    # 2^p - 1 base points, two fiber fixed points each
    assert len(periodic_points(P, 3).points) == 2 * 7
    # periods 1, 2 and 3 of x -> 3x: 2 + (8 - 2) + (26 - 2) distinct points
    X = periodic_points_raw(CircleMul(3), 3)
    assert len(X) == 32


# -- verdicts --------------------------------------------------------------------------

def test_attractor_verdicts():
    f, g, t, sets = decomposition("product", 128)
    assert classify_attractor(f, by_type(sets, (1, 1)), (0.05,)).verdict == "attractor"
    f, g, t, sets = decomposition("torus", 64)
    assert classify_attractor(f, sets[0], (0.05,)).verdict == "attractor"


def test_repeller_verdicts():
    f, g, t, sets = decomposition("product", 128)
    assert classify_repeller(f, by_type(sets, (2, 0))).repeller
    att = classify_repeller(f, by_type(sets, (1, 1)))
    assert not att.repeller
    assert not any(r["shrinks_to_set"] for r in att.per_r)
    f, g, t, sets = decomposition("quadc", 128)
    assert classify_repeller(f, by_type(sets, (2, 0))).repeller


def test_attractor_repeller_exclusive():
    for name in ("product", "forced"):
        f, g, t, sets = decomposition(name, 128)
        for L in sets:
            a = classify_attractor(f, L).is_attractor
            r = classify_repeller(f, L).repeller
            assert a != r


def test_expansion():
    f = CircleMul(2)
    g = BoxGrid(T1, 64)
    L = decompose_basic_sets(build_transition_graph(f, g), f=f)[0]
    assert verify_expanding_metric(f, L, 0.1).mu == pytest.approx(2.0, abs=1e-9)
    f3 = CircleMul(3)
    L3 = decompose_basic_sets(build_transition_graph(f3, g), f=f3)[0]
    d = verify_expanding_derivative(f3, L3)
    assert d.lambda_ == pytest.approx(3.0, rel=1e-12) and d.C == pytest.approx(1.0, rel=1e-12)
    f, g, t, sets = decomposition("product", 128)
    rep = verify_expanding_derivative(f, by_type(sets, (2, 0)))
    assert rep.lambda_ == pytest.approx(1 + 0.2 * math.pi, abs=1e-6)
    assert verify_expanding_metric(f, by_type(sets, (1, 1)), 0.05).mu == pytest.approx(2.0, abs=1e-2)


def test_injectivity_and_purity():
    f = CircleMul(2)
    L = decompose_basic_sets(build_transition_graph(f, BoxGrid(T1, 64)), f=f)[0]
    assert injectivity_scale(f, L) == pytest.approx(0.5)
    assert check_preimage_purity(f, L)
    f, g, t, sets = decomposition("torus", 64)
    assert injectivity_scale(f, sets[0]) == pytest.approx(math.sqrt(2) / 2)
    f, g, t, sets = decomposition("quad0", 128)
    circle = by_type(sets, (2, 0))
    assert injectivity_scale(f, circle) == pytest.approx(2.0, abs=1e-3)
    assert check_preimage_purity(f, circle)
    f, g, t, sets = decomposition("product", 128)
    assert check_preimage_purity(f, by_type(sets, (1, 1)))


def test_omega_limit_and_basins():
    f, g, t, sets = decomposition("product", 64)
    att = by_type(sets, (1, 1)).index
    rep = by_type(sets, (2, 0)).index
    assert omega_limit(f, wrap([0.2, 0.1], T2), sets) == att
    assert omega_limit(f, wrap([0.2, 0.5], T2), sets) == rep
    labels = basin_labels(f, sets)
    assert np.all(labels[g.active_ids] == att)
    f, g, t, sets = decomposition("torus", 64)
    assert omega_limit(f, wrap([0.123, 0.456], T2), sets) == 0


def test_uniform_margin():
    g = BoxGrid(T2, 64)
    rows = np.arange(64 * 64)
    y = (rows // 64 + 0.5) / 64
    U = np.abs(y - 0.5) < 0.1
    K = np.stack([np.linspace(0, 1, 1000, endpoint=False), np.full(1000, 0.5)], axis=1)
    m = uniform_margin(K, U, g)
    assert 0.1 - g.diameter <= m <= 0.1
    with pytest.raises(PointOutside):
        uniform_margin(np.array([[0.5, 0.9]]), U, g)


def test_axiom_a_circle():
    f = CircleMul(2)
    rep = verify_axiom_a(f, BoxGrid(T1, 64), 8)
    assert rep["axiom_a"] and rep["periodic_density"]["fraction"] == 1.0


# -- smoothness ------------------------------------------------------------------------

def test_smoothness_product_and_gate():
    f, g, t, sets = decomposition("product", 128)
    r = attractor_smoothness(f, by_type(sets, (1, 1)), 8)
    assert r.sup_abs == 0 and r.max_first_quotient == 0 and r.max_second_quotient == 0
    with pytest.raises(PreconditionError):
        attractor_smoothness(f, by_type(sets, (2, 0)))


def test_smoothness_forced_circle():
    f, g, t, sets = decomposition("forced", 128)
    A = by_type(sets, (1, 1))
    reps = [attractor_smoothness(f, A, m) for m in (7, 8, 9, 10)]
    for r in reps:
        assert 0 < r.sup_abs <= 0.05
        assert r.max_first_quotient <= 0.5
        assert r.invariance_residual < 1e-12
    # oracle: the invariant graph is kappa sin(2 pi x)
    assert reps[-1].sup_abs == pytest.approx(0.02, abs=1e-6)
    assert reps[-1].max_first_quotient == pytest.approx(2 * math.pi * 0.02, rel=1e-3)


def test_not_a_graph():
    g = BoxGrid(T2, 16)
    f = Product(2, 0.1)
    cells = np.array([0 + 16 * 0, 0 + 16 * 5] + list(range(1, 16)))
    L = BasicSetApprox(g, np.sort(cells), type_uv=(1, 1))
    with pytest.raises(NotAGraph):
        attractor_smoothness(f, L)


def test_curve_quotients():
    r0 = repeller_curve_quotients(Quadratic(0), 8)
    assert r0.max_first_quotient < 1e-9 and r0.sup_abs == pytest.approx(1.0)
    q7 = repeller_curve_quotients(Quadratic(0.2 + 0.2j), 7)
    q10 = repeller_curve_quotients(Quadratic(0.2 + 0.2j), 10)
    assert q10.max_first_quotient > 3 * q7.max_first_quotient
    assert q10.invariance_residual < 1e-9
