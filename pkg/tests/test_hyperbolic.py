import math

import numpy as np
import pytest

from aendo.errors import DivergentSum, SingularPointError
from aendo.geometry import TangentVector, sphere_point, torus, wrap
from aendo.hyperbolic import AdaptedNorm, adapted_norm, estimate_splitting, verify_hyperbolic
from aendo.models import CircleMul, Product, Quadratic, TorusLinear
from aendo.natural_extension import BackwardBranch, PreimageTree, branch_within, extend_branch

from conftest import CAT

T1, T2 = torus(1), torus(2)


def _branches(f, x, depth, n, seed=0):
    """n branches of x built from random preimage choices."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        b = BackwardBranch((x,))
        for _ in range(depth):
            b = extend_branch(f, b, int(rng.integers(f.degree)))
        out.append(b)
    return out


def _row0_branch(x, depth=24):
    f = Product(2, 0.1)
    t = PreimageTree.lazy(f, wrap([x, 0.0], T2), depth)
    return branch_within(t, lambda p: p.coords[1] == 0.0)


def _angle(a, b):
    a, b = np.ravel(a), np.ravel(b)
    c = abs(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))
    return math.acos(min(1.0, c))


def test_torus_splitting_eigenvectors():
    f = TorusLinear(CAT)
    b = _branches(f, wrap([0.3, 0.6], T2), 12, 1)[0]
    sp = estimate_splitting(f, b)
    assert sp.dims == (1, 1)
    assert _angle(sp.eu_frame, [0.92388, 0.38268]) < 1e-4
    assert _angle(sp.es_frame, [1.0, -(1 + math.sqrt(2))]) < 1e-6


def test_product_and_circle_splittings():
    sp = estimate_splitting(Product(2, 0.1), _row0_branch(0.3))
    assert _angle(sp.eu_frame, [1, 0]) < 1e-9 and _angle(sp.es_frame, [0, 1]) < 1e-9
    f = CircleMul(2)
    sp = estimate_splitting(f, _branches(f, wrap([0.3], T1), 8, 1)[0])
    assert sp.dims == (1, 0) and sp.Es == ()


def test_singular_branch_names_level():
    f = Quadratic(0)
    b = BackwardBranch((sphere_point(0), sphere_point(0)))
    with pytest.raises(SingularPointError) as e:
        estimate_splitting(f, b)
    assert e.value.level == 0


def test_stable_direction_branch_independent():
    f = Product(2, 0.1)
    x = wrap([0.3, 0.0], T2)
    bs = _branches(f, x, 10, 3)
    assert len({b.points[-1] for b in bs}) == 3
    frames = [estimate_splitting(f, b).es_frame for b in bs]
    assert all(_angle(frames[0], fr) < 1e-6 for fr in frames[1:])


def test_invariance_of_splitting():
    f = TorusLinear(CAT)
    b = _branches(f, wrap([0.41, 0.13], T2), 14, 1)[0]
    s0 = estimate_splitting(f, b.truncate(13))
    back = BackwardBranch(b.points[1:])
    s1 = estimate_splitting(f, back)
    A = np.array(CAT, dtype=float)
    assert _angle(A @ s1.eu_frame, s0.eu_frame) < 1e-4
    assert _angle(A @ s1.es_frame, s0.es_frame) < 1e-4


def test_verify_hyperbolic_examples():
    f = TorusLinear(CAT)
    est = verify_hyperbolic(f, _branches(f, wrap([0.2, 0.3], T2), 16, 4))
    assert est.lambda_ == pytest.approx(2 - math.sqrt(2), abs=1e-6)
    assert est.C == pytest.approx(1.0, abs=1e-6)
    assert est.hyperbolic
    g = CircleMul(3)
    e3 = verify_hyperbolic(g, _branches(g, wrap([0.2], T1), 6, 3))
    assert e3.lambda_ == pytest.approx(1 / 3, rel=1e-12) and e3.C == pytest.approx(1.0, abs=1e-12)
    ep = verify_hyperbolic(Product(2, 0.1), [_row0_branch(x) for x in (0.1, 0.3, 0.7)])
    assert ep.lambda_ == pytest.approx(0.5, abs=1e-9)
    assert ep.stable_rate < 0.5 and ep.hyperbolic


def test_adapted_norm_product_and_torus():
    f = Product(2, 0.1)
    bs = [_row0_branch(x) for x in np.linspace(0.01, 0.99, 40)]
    N = AdaptedNorm(f, bs, 0.8, m=8)
    assert N.violations(bs) == 0
    K = N.equivalence_constant(2000)
    assert 1.0 <= K < 10.0
    assert N(bs[0], TangentVector(bs[0].root, (0.0, 0.0))) == 0.0
    v = TangentVector(bs[0].root, (0.3, -0.4))
    assert N(bs[0], TangentVector(bs[0].root, (0.6, -0.8))) == pytest.approx(2 * N(bs[0], v))

    g = TorusLinear(CAT)
    tb = _branches(g, wrap([0.2, 0.3], T2), 16, 8)
    assert adapted_norm(g, tb, 0.9).violations(tb) == 0


def test_adapted_norm_rejects_small_lambda():
    f = Product(2, 0.1)
    bs = [_row0_branch(0.3)]
    with pytest.raises(DivergentSum):
        AdaptedNorm(f, bs, 0.2, m=8).violations(bs)
