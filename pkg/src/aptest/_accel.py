"""Backend selection for the hot kernels.

Set ``APTEST_NUMBA=0`` to force the pure-numpy code paths. numba is used
otherwise, when it imports.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None


def _env_wants_numba():
    return os.environ.get("APTEST_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


NUMBA_AVAILABLE = numba is not None
NUMBA_ENABLED = NUMBA_AVAILABLE and _env_wants_numba()


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    kwargs.setdefault("cache", True)
    if numba is None:
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda fn: fn
    return numba.njit(*args, **kwargs)


def backend():
    return "numba" if NUMBA_ENABLED else "numpy"
