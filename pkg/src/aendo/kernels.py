"""Kernel backend selection.

The compiled extension is used when it was built; setting the environment
variable ``AENDO_PURE_PYTHON=1`` forces the numpy fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

_force_pure = os.environ.get("AENDO_PURE_PYTHON", "").strip() not in ("", "0")

try:
    if _force_pure:
        raise ImportError("pure backend requested")
    from . import _kernels as _impl  # type: ignore[attr-defined]

    BACKEND = "cython"
except ImportError:
    _impl = _kernels_py
    BACKEND = "python"

rasterize = _impl.rasterize
prune_invariant = _impl.prune_invariant


def backends() -> dict:
    """All importable backends by name (used by the benchmark and tests)."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels  # type: ignore[attr-defined]

        out["cython"] = _kernels
    except ImportError:
        pass
    return out
