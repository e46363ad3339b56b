"""Optional numba acceleration.

Hot kernels are written once as plain Python/NumPy loops and compiled with
``numba.njit`` when numba is importable.  Set ``FEDHARM_DISABLE_NUMBA=1`` to
force the pure-NumPy fallback path (handy for debugging and for checking that
both paths agree).
"""

import os

_FLAG = os.environ.get("FEDHARM_DISABLE_NUMBA", "").strip().lower()

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is an optional extra
    _numba = None

NUMBA_AVAILABLE = _numba is not None
USE_NUMBA = NUMBA_AVAILABLE and _FLAG not in ("1", "true", "yes", "on")


def njit(func):
    """Compile ``func`` in nopython mode, or return it untouched without numba."""
    if _numba is None:
        return func
    return _numba.njit(cache=True)(func)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
