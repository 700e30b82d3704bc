"""Numba acceleration switch for the hot simulation kernels.

The trial kernels in :mod:`mdsaf.kernels` are written as plain loops so the
same source runs either JIT-compiled (default) or as pure Python/numpy when
``MDSAF_DISABLE_NUMBA=1`` is set, or when numba is missing.  The fallback is
slow and meant for debugging, tiny unit-test workloads, and the benchmark in
``benchmarks/bench_kernels.py``.
"""

from __future__ import annotations

import os

NUMBA_DISABLED = os.environ.get("MDSAF_DISABLE_NUMBA", "").strip() in {"1", "true", "yes"}

try:  # pragma: no cover - exercised implicitly by every kernel call
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

NUMBA_ENABLED = HAVE_NUMBA and not NUMBA_DISABLED


def maybe_njit(func):
    """Apply ``numba.njit(cache=True)`` unless the fallback path is selected.

    The undecorated function stays reachable as ``.py_func`` either way, so
    benchmarks can time both paths in one process.
    """
    if NUMBA_ENABLED:
        return numba.njit(cache=True)(func)
    func.py_func = func
    return func
