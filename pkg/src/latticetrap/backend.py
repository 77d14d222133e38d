"""Kernel backend selection.

Hot inner loops (relaxation sweeps, grid transfer, trajectory stepping) exist
twice: a numba @njit implementation and a pure-numpy fallback with identical
semantics. The active backend is chosen once from the environment:

    LATTICETRAP_BACKEND = auto | numba | numpy   (default: auto)

``auto`` picks numba when it imports, numpy otherwise. LATTICETRAP_THREADS
caps the numba thread pool (the numpy path ignores it).
"""

from __future__ import annotations

import logging
import os

log = logging.getLogger(__name__)

_ACTIVE = None
_ACTIVE_NAME = None


def _load(name: str):
    if name == "numpy":
        from . import _kernels_numpy
        return _kernels_numpy
    if name == "numba":
        from . import _kernels_numba
        return _kernels_numba
    raise ValueError(f"unknown backend {name!r}")


def _numba_available() -> bool:
    try:
        import numba  # noqa: F401
        return True
    except ImportError:
        return False


def set_backend(name: str):
    """Force a backend programmatically (used by benchmarks and tests)."""
    global _ACTIVE, _ACTIVE_NAME
    _ACTIVE = _load(name)
    _ACTIVE_NAME = name


def kernels():
    """Return the active kernel module, resolving the env flag on first use."""
    global _ACTIVE, _ACTIVE_NAME
    if _ACTIVE is None:
        requested = os.environ.get("LATTICETRAP_BACKEND", "auto").strip().lower() or "auto"
        if requested == "auto":
            name = "numba" if _numba_available() else "numpy"
        elif requested == "numba" and not _numba_available():
            log.warning("numba backend requested but numba is not importable; using numpy")
            name = "numpy"
        else:
            name = requested
        if name == "numba":
            _configure_numba_threads()
        set_backend(name)
    return _ACTIVE


def backend_name() -> str:
    kernels()
    return _ACTIVE_NAME


def _configure_numba_threads():
    cap = os.environ.get("LATTICETRAP_THREADS")
    if not cap:
        return
    try:
        n = max(1, int(cap))
    except ValueError:
        log.warning("ignoring non-integer LATTICETRAP_THREADS=%r", cap)
        return
    import numba
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
