"""Shared zoo models and cached decompositions (built once per session)."""

import numpy as np
import pytest

from aendo.geometry import SPHERE, torus
from aendo.models import CircleMul, ForcedCircle, Product, Quadratic, TorusLinear
from aendo.spectral.graph import build_transition_graph
from aendo.spectral.grid import BoxGrid
from aendo.spectral.sets import decompose_basic_sets

CAT = ((3, 1), (1, 1))

_CACHE = {}


def zoo_model(name):
    return {
        "circle": CircleMul(2),
        "torus": TorusLinear(CAT),
        "product": Product(2, 0.1),
        "forced": ForcedCircle(2, 0.1, 0.02),
        "quad0": Quadratic(0),
        "quadc": Quadratic(0.2 + 0.2j),
    }[name]


def decomposition(name, n):
    """(f, grid, graph, typed basic sets) for a zoo model at n cells per axis."""
    key = (name, n)
    if key not in _CACHE:
        f = zoo_model(name)
        g = BoxGrid(f.manifold, n)
        t = build_transition_graph(f, g)
        _CACHE[key] = (f, g, t, decompose_basic_sets(t, f=f))
    return _CACHE[key]


def by_type(sets, uv):
    hits = [L for L in sets if L.type_uv == uv]
    assert hits, f"no basic set of type {uv}"
    return hits[0]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
