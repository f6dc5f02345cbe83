"""Backend selection for the compiled kernels.

Set ``UAVROUTE_DISABLE_NUMBA=1`` to force the pure numpy/heapq path (useful
for debugging, or where numba is not installed).
"""
import os

_DISABLED = os.environ.get("UAVROUTE_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap


def backend() -> str:
    return "numba" if NUMBA_AVAILABLE else "python"
