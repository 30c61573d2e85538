"""Numeric kernels: chain walk, Jacobians, per-waypoint cost terms + gradients.

Two interchangeable backends: a compiled Cython extension for the hot inner
loop and a pure-numpy fallback.  The extension is preferred at import time;
set CODESIGN_PURE_PYTHON=1 to force the fallback.
"""

import os

from codesign.kernels import pybackend

if os.environ.get("CODESIGN_PURE_PYTHON"):
    _backend = pybackend
else:
    try:
        from codesign.kernels import _native as _backend
    except ImportError:
        _backend = pybackend

fk_pose = _backend.fk_pose
fk_jacobian = _backend.fk_jacobian
batch_eval = _backend.batch_eval


def backend_name() -> str:
    return _backend.NAME


def get_backend(name: str):
    """Fetch a backend module by name ("native" or "python"); for benchmarks."""
    if name == "python":
        return pybackend
    if name == "native":
        from codesign.kernels import _native
        return _native
    raise ValueError(f"unknown backend {name!r}")
