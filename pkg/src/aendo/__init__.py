"""Numerics for hyperbolic endomorphisms: natural-extension branches, splittings,
local manifolds, basic sets and attractor/repeller verdicts."""

__version__ = "0.1.0"
