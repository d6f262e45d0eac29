"""Backend selection for the compiled kernels.

Set ``DISHARMONY_NUMBA=0`` to force the pure-numpy path. When numba cannot be
imported the numpy path is used regardless.
"""
import os

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None
    HAS_NUMBA = False

_ENV_FLAG = "DISHARMONY_NUMBA"

_backend = "numba" if HAS_NUMBA and os.environ.get(_ENV_FLAG, "1") != "0" else "numpy"


def njit(fn):
    """``numba.njit`` with the project defaults, or the identity without numba."""
    if not HAS_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


def backend():
    return _backend


def set_backend(name):
    """Switch kernels at runtime; returns the previous backend name."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba is not installed")
    prev, _backend = _backend, name
    return prev
