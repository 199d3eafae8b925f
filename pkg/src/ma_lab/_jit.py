"""Numba switch.

Set ``MA_LAB_DISABLE_NUMBA=1`` to force the pure-numpy kernels, e.g. for
debugging or on platforms without llvmlite.  When numba is missing the
fallback is selected automatically.
"""
import os

_disabled = os.environ.get("MA_LAB_DISABLE_NUMBA", "").strip().lower() in (
    "1", "true", "yes", "on")

try:
    import numba as _numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _disabled


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise.

    Kernels are always compiled when numba exists (so the benchmark can
    compare both paths); ``USE_NUMBA`` only decides which one the library
    dispatches to.
    """
    if HAVE_NUMBA:
        return _numba.njit(*args, cache=True, **kwargs)

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrapper(func):
        return func
    return wrapper
