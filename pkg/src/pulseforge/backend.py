"""Kernel backend selection.

The propagation kernels in :mod:`pulseforge.kernels` are written once, in a
numba-compatible subset of numpy.  Whether they get jit-compiled or run as
plain python is decided here at import time from the ``PULSEFORGE_BACKEND``
environment variable:

``auto``
    use numba when it is importable, plain numpy otherwise (default)
``numba``
    require numba; raise immediately if it cannot be imported
``numpy``
    force the pure-numpy path even when numba is installed

The numpy path is a correctness fallback, not a performance path; see
``benchmarks/bench_backends.py`` for the measured gap.
"""

from __future__ import annotations

import os

_FLAG_ENV = "PULSEFORGE_BACKEND"
_VALID = ("auto", "numba", "numpy")

_choice = os.environ.get(_FLAG_ENV, "auto").strip().lower()
if _choice not in _VALID:
    raise ValueError(
        f"{_FLAG_ENV}={_choice!r} is not one of {_VALID}"
    )

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - depends on install
    numba = None
    HAS_NUMBA = False

if _choice == "numba" and not HAS_NUMBA:  # pragma: no cover
    raise ImportError(
        f"{_FLAG_ENV}=numba but numba is not importable in this environment"
    )

USE_NUMBA: bool = HAS_NUMBA if _choice == "auto" else (_choice == "numba")


def backend_name() -> str:
    """Name of the active kernel backend, for manifests and benchmarks."""
    return "numba" if USE_NUMBA else "numpy"


def jit(func):
    """Decorate a kernel with ``numba.njit`` or leave it as plain python."""
    if USE_NUMBA:
        return numba.njit(cache=True)(func)
    return func
