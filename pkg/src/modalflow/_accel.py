"""Backend selection for the hot kernels.

Set ``MODALFLOW_NUMBA=0`` in the environment to force the pure-numpy path.
The flag is read once at import time.
"""
import os

_FLAG = os.environ.get("MODALFLOW_NUMBA", "1").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None

USE_NUMBA = numba is not None and _FLAG not in ("0", "false", "no", "off")


def njit(fn):
    """Compile ``fn`` in nopython mode when numba is enabled, else return None."""
    if not USE_NUMBA:
        return None
    return numba.njit(cache=True, nogil=True)(fn)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


def set_threads(n):
    """Cap numba's worker threads; a no-op on the numpy path."""
    if USE_NUMBA and n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
