import cmath
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from aendo.errors import PreconditionError
from aendo.geometry import SPHERE, dist_array, infinity, sphere_point, torus, wrap
from aendo.models import (
    CircleMul,
    ForcedCircle,
    MorseSmale,
    Product,
    Quadratic,
    TorusLinear,
    degree,
    evaluate,
    from_params,
    is_regular,
    jacobian,
    preimages,
)

from conftest import CAT, zoo_model

T1, T2 = torus(1), torus(2)


def test_eval_examples():
    assert evaluate(CircleMul(2), wrap([0.3], T1)).coords[0] == pytest.approx(0.6)
    assert evaluate(TorusLinear(CAT), wrap([0.5, 0.5], T2)).coords == (0.0, 0.0)
    assert evaluate(Quadratic(0), sphere_point(2j)).z == -4
    assert evaluate(Quadratic(0.3), infinity()).at_infinity


def test_jacobian_examples():
    assert jacobian(CircleMul(2), wrap([0.7], T1)).entries.tolist() == [[2.0]]
    assert np.array_equal(jacobian(TorusLinear(CAT), wrap([0.1, 0.9], T2)).entries, np.array(CAT, dtype=float))
    assert np.array_equal(jacobian(Quadratic(0), sphere_point(1 + 1j)).entries, [[2, -2], [2, 2]])


def test_preimage_examples():
    assert [p.coords[0] for p in preimages(CircleMul(2), wrap([0.5], T1))] == [0.25, 0.75]
    assert len(preimages(TorusLinear(CAT), wrap([0.3, 0.8], T2))) == 2
    P = sorted((p.z for p in preimages(Quadratic(0), sphere_point(-4))), key=lambda z: z.imag)
    assert P == [-2j, 2j]
    # critical value: double root listed once
    assert len(preimages(Quadratic(0.25), sphere_point(0.25))) == 1


def test_regular_and_degree():
    assert is_regular(CircleMul(2), wrap([0.4], T1))
    assert not is_regular(Quadratic(0), sphere_point(0))
    assert not is_regular(Quadratic(0), infinity())
    assert is_regular(Product(2, 0.1), wrap([0.3, 0.0], T2))
    assert degree(CircleMul(3)) == 3
    assert degree(TorusLinear(CAT)) == 2
    assert degree(Product(2, 0.1)) == 2


def test_construction_gates():
    with pytest.raises(ValueError):
        TorusLinear(((1, 1), (0, 1)))
    with pytest.raises(ValueError):
        CircleMul(1)
    with pytest.raises(ValueError):
        MorseSmale(0.2)
    with pytest.raises(ValueError):
        ForcedCircle(2, 0.1, 0.06)
    ev = np.sort(np.abs(np.linalg.eigvals(np.array(CAT, dtype=float))))
    assert ev == pytest.approx([2 - math.sqrt(2), 2 + math.sqrt(2)], abs=1e-12)


def test_morse_smale_rates():
    g = MorseSmale(0.1)
    assert g.deriv(0.0) == pytest.approx(1 - 0.2 * math.pi)
    assert g.deriv(0.5) == pytest.approx(1 + 0.2 * math.pi)
    q = np.linspace(0, 1, 50, endpoint=False)
    assert np.allclose(g(g.inverse(q)), q, atol=1e-12)


def _oracle_preimages(f, q):
    """Independent preimage enumeration for each zoo model."""
    if isinstance(f, CircleMul):
        return np.array([[(q[0] + j) / f.k] for j in range(f.k)]) % 1.0
    if isinstance(f, TorusLinear):
        A = np.array(f.A, dtype=float)
        D = int(round(abs(np.linalg.det(A))))
        cand = [np.linalg.solve(A, q + np.array([i, j])) % 1.0 for i in range(D) for j in range(D)]
        out = []
        for c in cand:
            if all(dist_array(T2, c, o) > 1e-9 for o in out):
                out.append(c)
        return np.array(out)
    if isinstance(f, Quadratic):
        r = cmath.sqrt(q - f.c)
        return np.array([r, -r]) if abs(r) > 0 else np.array([r])
    if isinstance(f, Product):
        out = []
        for j in range(f.k):
            x = (q[0] + j) / f.k
            s = f.shear(x)
            target = (q[1] - f.shear(f.k * x)) % 1.0
            u = brentq(lambda v: v - f.a * math.sin(2 * math.pi * v) - target, -0.5, 1.5, xtol=1e-15)
            out.append([x % 1.0, (u + s) % 1.0])
        return np.array(out)
    raise TypeError(f)


@pytest.mark.parametrize("name", ["circle", "torus", "product", "forced", "quad0", "quadc"])
def test_preimages_match_oracle(name, rng):
    f = zoo_model(name)
    for _ in range(200):
        if f.manifold.is_sphere:
            q = complex(*rng.normal(size=2) * 2)
        else:
            q = rng.random(f.manifold.dimension)
        P = f.preimages_raw(q)
        O = _oracle_preimages(f, q)
        assert len(P) == len(O) == f.degree
        assert np.all(dist_array(f.manifold, f.eval_raw(P), q) < 1e-9)
        for o in O:
            assert np.min(dist_array(f.manifold, P, o)) < 1e-9


@pytest.mark.parametrize("name", ["circle", "torus", "product", "forced", "quad0", "quadc"])
def test_jacobian_finite_differences(name, rng):
    f = zoo_model(name)
    h = 1e-6
    m = f.manifold
    for _ in range(100):
        if m.is_sphere:
            z = complex(*rng.normal(size=2))
            J = f.jac_raw(np.array([z]))[0]
            for j, dz in enumerate((h, 1j * h)):
                d = (f.eval_raw(np.array([z + dz]))[0] - f.eval_raw(np.array([z - dz]))[0]) / (2 * h)
                assert [d.real, d.imag] == pytest.approx(J[:, j], abs=1e-6)
        else:
            x = rng.random(m.dimension)
            J = f.jac_raw(x[None])[0]
            for j in range(m.dimension):
                e = np.zeros(m.dimension)
                e[j] = h
                d = f.eval_raw((x + e)[None])[0] - f.eval_raw((x - e)[None])[0]
                d = (d + 0.5) % 1.0 - 0.5
                assert d / (2 * h) == pytest.approx(J[:, j], abs=1e-6)


def test_from_params():
    assert isinstance(from_params({"model": "product", "k": 2, "amplitude": 0.1}), Product)
    assert from_params({"model": "torus_linear", "matrix": [[3, 1], [1, 1]]}).degree == 2
    assert from_params({"model": "quadratic", "c_re": 0.2, "c_im": 0.2}).c == 0.2 + 0.2j
    with pytest.raises(PreconditionError):
        from_params({"model": "henon"})
