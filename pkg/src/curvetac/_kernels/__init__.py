"""Kernel backend selection.

The compiled Cython extension is preferred; the pure-Python mirror is the
fallback (same results bit for bit, much slower). Set CURVETAC_PURE_PYTHON=1
to force the fallback, e.g. for benchmarking.
"""

import os

if os.environ.get("CURVETAC_PURE_PYTHON", "") not in ("", "0"):
    from . import _core_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _core_cy as _impl

        BACKEND = "cython"
    except ImportError:
        from . import _core_py as _impl

        BACKEND = "python"

slice_walk = _impl.slice_walk
straighten_path = _impl.straighten_path


def kernel_backend() -> str:
    """Name of the active kernel backend: 'cython' or 'python'."""
    return BACKEND
