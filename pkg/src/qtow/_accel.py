"""Numba switch for the hot loops.

Set ``QTOW_DISABLE_NUMBA=1`` to run every kernel as plain Python/numpy.
The kernels are written so the same source is valid on both paths.
"""
import os

_FLAG = os.environ.get("QTOW_DISABLE_NUMBA", "").strip().lower()
DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    if DISABLED:
        raise ImportError
    import numba

    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False


def njit(func=None, **kwargs):
    """``numba.njit(cache=True)`` when available, identity otherwise."""
    def wrap(f):
        if not HAVE_NUMBA:
            return f
        kwargs.setdefault("cache", True)
        return numba.njit(**kwargs)(f)

    if func is not None:
        return wrap(func)
    return wrap


def backend():
    return "numba" if HAVE_NUMBA else "python"
