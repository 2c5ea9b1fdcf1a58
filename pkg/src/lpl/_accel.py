"""JIT switch for the loop kernels.

Set ``LPL_DISABLE_NUMBA=1`` to force the pure-numpy fallbacks. ``LPL_THREADS``
caps the numba thread pool. Kernels never split a reduction across threads, so
results do not depend on the thread count.
"""

import os

_FALSY = {"", "0", "false", "no", "off"}

NUMBA_REQUESTED = os.getenv("LPL_DISABLE_NUMBA", "").strip().lower() in _FALSY

try:
    if not NUMBA_REQUESTED:
        raise ImportError("numba disabled by LPL_DISABLE_NUMBA")
    import numba

    NUMBA_AVAILABLE = True
except ImportError:
    numba = None
    NUMBA_AVAILABLE = False

NUMBA_OPTS = {"cache": True, "nogil": True}


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, otherwise a no-op decorator."""
    opts = dict(NUMBA_OPTS, **kwargs)
    if not NUMBA_AVAILABLE:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    if args and callable(args[0]):
        return numba.njit(**opts)(args[0])
    return numba.njit(**opts)


def configure_threads():
    """Apply ``LPL_THREADS`` to the numba pool; returns the active count or None."""
    if not NUMBA_AVAILABLE:
        return None
    raw = os.getenv("LPL_THREADS")
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # the bundled TBB is often too old and warns on first use
        numba.config.THREADING_LAYER = "workqueue"
    if raw:
        n = max(1, min(int(raw), numba.config.NUMBA_NUM_THREADS))
        numba.set_num_threads(n)
    return numba.get_num_threads()


def backend():
    return "numba" if NUMBA_AVAILABLE else "numpy"
