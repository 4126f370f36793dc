"""Backend selection for the numeric kernels.

Every hot loop in the package has two implementations: a numba ``@njit``
kernel and a vectorized numpy fallback. The backend is chosen once from the
``S2HREG_BACKEND`` environment variable (``numba`` or ``numpy``) and can be
switched at runtime with :func:`set_backend` (benchmarks and tests use this).
If numba cannot be imported the numpy path is used unconditionally.
"""
from __future__ import annotations

import contextlib
import os

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

_VALID = ("numba", "numpy")
_backend = os.environ.get("S2HREG_BACKEND", "numba").strip().lower()
if _backend not in _VALID:
    raise ValueError(f"S2HREG_BACKEND must be one of {_VALID}, got {_backend!r}")
if not HAS_NUMBA:
    _backend = "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` with caching on; a no-op decorator without numba."""
    if not HAS_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)


def backend() -> str:
    return _backend


def use_numba() -> bool:
    return _backend == "numba"


def set_backend(name: str) -> None:
    global _backend
    name = name.strip().lower()
    if name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


@contextlib.contextmanager
def using(name: str):
    """Temporarily switch backend."""
    prev = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)
