"""Kernel backend selection.

Hot per-voxel kernels (marching cubes, triangle distances) exist twice: a
numba @njit build and a pure-numpy build with identical outputs.  The env
variable FIELDFORGE_BACKEND picks one ("numba" or "numpy"); unset means
numba when importable, numpy otherwise.
"""

from __future__ import annotations

import os

_ENV_VAR = "FIELDFORGE_BACKEND"

try:
    import numba  # noqa: F401

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False


def have_numba() -> bool:
    return _HAVE_NUMBA


def backend() -> str:
    """Resolve the active kernel backend ("numba" or "numpy")."""
    choice = os.environ.get(_ENV_VAR, "").strip().lower()
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        if not _HAVE_NUMBA:
            raise RuntimeError(f"{_ENV_VAR}=numba but numba is not importable")
        return "numba"
    if choice not in ("", "auto"):
        raise ValueError(f"{_ENV_VAR} must be 'numba', 'numpy' or 'auto', got {choice!r}")
    return "numba" if _HAVE_NUMBA else "numpy"


def use_numba() -> bool:
    return backend() == "numba"


def set_num_threads(n: int) -> None:
    """Cap numba's thread pool; no-op on the numpy backend."""
    if n < 1:
        raise ValueError("thread count must be >= 1")
    if _HAVE_NUMBA:
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
