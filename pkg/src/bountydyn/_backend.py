"""Backend selection for the hot kernels.

Two interchangeable implementations exist for each kernel: a numba
``@njit`` version and a pure-numpy version. ``BD_NUMBA=0`` forces the numpy
path; any other value (or the variable being unset) selects numba when it
imports cleanly. ``BD_THREADS`` caps the numba thread pool.

The flag is re-read on every call, so tests and callers may flip the
environment variable at runtime.
"""

from __future__ import annotations

import os
import warnings

_numba_state: dict = {"checked": False, "available": False, "module": None}


def _numba_module():
    if not _numba_state["checked"]:
        _numba_state["checked"] = True
        try:
            # quiet, portable default; callers may still pre-set a layer
            os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")
            import numba  # noqa: PLC0415

            _numba_state["available"] = True
            _numba_state["module"] = numba
            threads = os.environ.get("BD_THREADS")
            if threads:
                try:
                    numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))
                except (ValueError, RuntimeError) as exc:
                    warnings.warn(f"ignoring BD_THREADS={threads!r}: {exc}", stacklevel=2)
        except ImportError:
            _numba_state["available"] = False
    return _numba_state["module"]


def use_numba() -> bool:
    """True when the numba kernel path is selected and importable."""
    flag = os.environ.get("BD_NUMBA", "").strip().lower()
    if flag in {"0", "false", "off", "no"}:
        return False
    return _numba_module() is not None


def active_backend() -> str:
    return "numba" if use_numba() else "numpy"
