"""Numba acceleration layer with a pure-numpy fallback.

Hot kernels in this package are compiled with numba's ``@njit`` by default.
Setting the environment variable ``SPINPULSE_NUMBA=0`` (checked once at
import) switches every kernel to its pure-numpy implementation, which is
useful on platforms without a working numba install and for benchmarking
(see ``benchmarks/bench_kernels.py``).
"""

import os

__all__ = ["NUMBA_ENABLED", "maybe_njit", "prange", "set_num_threads"]


def _numba_requested() -> bool:
    flag = os.environ.get("SPINPULSE_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "off", "no")


NUMBA_ENABLED = False
if _numba_requested():
    try:
        import numba

        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False

if NUMBA_ENABLED:
    from numba import prange

    def maybe_njit(*args, **kwargs):
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)

    def set_num_threads(n: int) -> None:
        numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))

else:
    prange = range

    def maybe_njit(*args, **kwargs):
        # plain passthrough decorator, tolerant of njit-style options
        if args and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(func):
            return func

        return wrap

    def set_num_threads(n: int) -> None:
        pass
