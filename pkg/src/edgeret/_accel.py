"""Optional numba acceleration.

Hot loops are written once as plain Python over numpy arrays and wrapped
with :func:`kernel`. When numba is importable and ``EDGERET_DISABLE_NUMBA``
is unset (or ``0``), the wrapper compiles them with ``njit``; otherwise the
plain functions run unchanged. Both paths must produce identical output.
"""

import os

_flag = os.environ.get("EDGERET_DISABLE_NUMBA", "0").strip().lower()
_disabled = _flag not in ("", "0", "false", "no")

try:
    if _disabled:
        raise ImportError
    from numba import njit
    HAVE_NUMBA = True
except ImportError:
    njit = None
    HAVE_NUMBA = False


def kernel(func):
    """Compile ``func`` with numba when enabled; keep the Python original
    reachable as ``.py_func`` either way (for benchmarks and parity tests)."""
    if HAVE_NUMBA:
        compiled = njit(cache=True, nogil=True)(func)
        return compiled
    func.py_func = func
    return func


def backend():
    return "numba" if HAVE_NUMBA else "numpy"
