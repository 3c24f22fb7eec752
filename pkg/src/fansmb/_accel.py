"""Optional numba acceleration.

Set ``FANSMB_DISABLE_NUMBA=1`` to force the pure-numpy code paths, e.g. when
numba is unavailable or when comparing both paths in the benchmark.
"""
import os

_DISABLED = os.environ.get("FANSMB_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAS_NUMBA = False
    _njit = None


def njit(*args, **kwargs):
    """``numba.njit`` with cache/nogil on, or ``None`` when disabled.

    Kernels decorated with this are only dispatched to when ``HAS_NUMBA``.
    """
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    if not HAS_NUMBA:
        def passthrough(fn):
            return fn
        return passthrough if not args or not callable(args[0]) else args[0]
    return _njit(*args, **kwargs)


def use_numba():
    return HAS_NUMBA
