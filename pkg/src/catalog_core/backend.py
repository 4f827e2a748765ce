"""Kernel backend selection and thread capping.

Two interchangeable kernel sets exist: numba-JIT (default when numba is
importable) and pure numpy. ``CATALOG_CORE_BACKEND`` selects one
explicitly ("numba" or "numpy"). ``CATALOG_CORE_THREADS`` caps the numba
thread pool; because every kernel parallelizes only across independent
rows, results are identical for any value.

Dense matrix products go through BLAS in both backends; the JIT path
covers the elementwise and per-row-reduction kernels where numpy would
materialize temporaries.
"""

import os
from types import ModuleType

from .errors import ConfigError

BACKEND_ENV = "CATALOG_CORE_BACKEND"
THREADS_ENV = "CATALOG_CORE_THREADS"

_kernels: ModuleType | None = None


def _thread_cap() -> int | None:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return None
    try:
        requested = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if requested < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1, got {requested}")
    return requested


def _apply_thread_cap(cap: int | None) -> None:
    if cap is None:
        return
    import numba

    numba.set_num_threads(min(cap, numba.config.NUMBA_NUM_THREADS))


def _load() -> ModuleType:
    choice = os.environ.get(BACKEND_ENV, "").strip().lower()
    if choice not in ("", "numba", "numpy"):
        raise ConfigError(f"{BACKEND_ENV} must be 'numba' or 'numpy', got {choice!r}")
    cap = _thread_cap()  # validated for every backend, applied on numba only
    if choice == "numpy":
        from . import _kernels_numpy as mod
        return mod
    if choice == "numba":
        _apply_thread_cap(cap)
        from . import _kernels_numba as mod
        return mod
    try:
        _apply_thread_cap(cap)
        from . import _kernels_numba as mod
    except ImportError:
        from . import _kernels_numpy as mod
    return mod


def kernels() -> ModuleType:
    """Return the active kernel module, resolving the env flags once."""
    global _kernels
    if _kernels is None:
        _kernels = _load()
    return _kernels


def backend_name() -> str:
    return kernels().NAME
