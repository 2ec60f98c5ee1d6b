"""numba switch.

Hot kernels are written once as plain loops and compiled with ``njit`` when
numba is importable. Setting ``PANSHARP_LAB_NUMBA=0`` in the environment
forces the pure-numpy implementations instead; the flag is read once at
import time.
"""
import os


def _noop_jit(*args, **kwargs):
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(f):
        return f

    return wrap


def _have_numba():
    try:
        import numba  # noqa: F401

        return True
    except ImportError:
        return False


HAVE_NUMBA = _have_numba()
USE_NUMBA = HAVE_NUMBA and os.environ.get("PANSHARP_LAB_NUMBA", "1").strip().lower() not in (
    "0",
    "false",
    "no",
    "off",
)

if HAVE_NUMBA:
    from numba import njit
else:
    njit = _noop_jit
