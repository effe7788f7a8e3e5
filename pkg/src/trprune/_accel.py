"""Backend selection for the hot kernels.

Numba is used when it imports cleanly and ``TRP_DISABLE_NUMBA`` is unset
(or set to ``0``). Otherwise every kernel falls back to its vectorized
NumPy twin in :mod:`trprune.kernels`.
"""
import os

_FLAG = os.environ.get("TRP_DISABLE_NUMBA", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba ships with the dev env
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and _FLAG in ("", "0", "false", "no")


def njit(func):
    """``numba.njit`` with caching, or the identity when numba is missing."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
