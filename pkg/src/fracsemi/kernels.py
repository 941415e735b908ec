"""Backend selection for the dense pair kernels.

The compiled extension is used when importable; ``FRACSEMI_BACKEND=python``
forces the numpy fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
pair_energy = _kernels_py.pair_energy
pair_grad = _kernels_py.pair_grad

if os.environ.get("FRACSEMI_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:
        _compiled = None
    if _compiled is not None:
        BACKEND = "cython"
        pair_energy = _compiled.pair_energy
        pair_grad = _compiled.pair_grad

__all__ = ["BACKEND", "pair_energy", "pair_grad"]
