"""Numba dispatch helpers.

Hot numerical kernels in this package are written once, in an array-oriented
style that runs unchanged under plain numpy, and are JIT-compiled when numba
is importable.  Setting the environment variable ``KAM3BP_DISABLE_NUMBA=1``
forces the pure-numpy path (useful for debugging and for the benchmark in
``bench/benchmark.py``).
"""

import os

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    _HAVE_NUMBA = False


def numba_disabled_by_env():
    return os.environ.get("KAM3BP_DISABLE_NUMBA", "0").lower() in ("1", "true", "yes")


USE_NUMBA = _HAVE_NUMBA and not numba_disabled_by_env()


def maybe_njit(*args, **kwargs):
    """Return ``numba.njit`` when enabled, identity decorator otherwise."""

    def decorate(fn):
        if USE_NUMBA:
            return numba.njit(*args, **kwargs)(fn)
        return fn

    if len(args) == 1 and callable(args[0]) and not kwargs:
        fn, args = args[0], ()
        return decorate(fn)
    return decorate
