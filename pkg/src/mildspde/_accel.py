"""Numba switch.

Set ``MILDSPDE_DISABLE_NUMBA=1`` before import to route every hot kernel
through its pure-numpy twin. Both paths are importable regardless of the
flag so tests and the benchmark can compare them directly.
"""

import os

_FLAG = "MILDSPDE_DISABLE_NUMBA"

try:
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _njit = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get(_FLAG, "0").lower() not in ("1", "true", "yes")


def njit(func):
    """Compile with numba when available; otherwise return ``func`` untouched."""
    if not HAVE_NUMBA:
        return func
    # no fastmath: results must not depend on reassociation
    return _njit(cache=True, nogil=True)(func)
