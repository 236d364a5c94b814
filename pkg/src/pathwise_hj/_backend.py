"""Kernel backend selection.

Set ``PATHWISE_HJ_BACKEND=numpy`` to force the pure-numpy kernels; the
default is ``numba`` whenever numba imports cleanly.
"""

import os

_requested = os.environ.get("PATHWISE_HJ_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"PATHWISE_HJ_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

HAVE_NUMBA = False
if _requested == "numba":
    try:
        import numba  # noqa: F401

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - depends on environment
        HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"
