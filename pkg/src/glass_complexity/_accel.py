"""Optional numba acceleration.

Set ``GLASS_COMPLEXITY_NO_NUMBA=1`` to force the pure-numpy code paths, e.g.
for debugging or on platforms without numba.
"""
import os
import warnings

_DISABLED = os.environ.get("GLASS_COMPLEXITY_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")

# the bundled TBB is too old for numba; the workqueue layer is always available
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

try:
    if _DISABLED:
        raise ImportError("numba disabled by environment")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from numba import njit, prange

    NUMBA_ENABLED = True
except ImportError:  # pragma: no cover - exercised with the env flag
    NUMBA_ENABLED = False
    prange = range

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap


JIT_OPTIONS = {"cache": True, "nogil": True}
