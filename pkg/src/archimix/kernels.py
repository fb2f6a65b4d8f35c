"""Backend selection for the hot loops.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``ARCHIMIX_PURE_PYTHON`` is set to a non-empty value
other than ``0``, the numpy implementation is used.
"""

import os

from . import _kernels_py

_force_python = os.environ.get("ARCHIMIX_PURE_PYTHON", "") not in ("", "0")

try:
    if _force_python:
        raise ImportError("pure-Python backend requested")
    from . import _kernels as _impl
except ImportError:
    _impl = _kernels_py

BACKEND = _impl.BACKEND
sweep_labels = _impl.sweep_labels
binder_allocate = _impl.binder_allocate
allocation_log_weights = _kernels_py.allocation_log_weights


def backends():
    """All importable backends, keyed by name."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels

        out["cython"] = _kernels
    except ImportError:
        pass
    return out
