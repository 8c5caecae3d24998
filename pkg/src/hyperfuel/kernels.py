"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
implementation. Set ``HYPERFUEL_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _pykernels

try:
    if os.environ.get("HYPERFUEL_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from . import _ckernels as _impl
    BACKEND = "compiled"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"

warp_bilinear = _impl.warp_bilinear
max_rectangle = _impl.max_rectangle


def available_backends() -> dict:
    """Name -> module for every importable backend (used by tests and the benchmark)."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
        out["compiled"] = _ckernels
    except ImportError:
        pass
    return out
