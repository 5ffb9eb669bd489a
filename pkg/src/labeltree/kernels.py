"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
implementation. ``LABELTREE_BACKEND=python`` forces the fallback.
"""
import os

from . import _pykernels as python_backend

if os.environ.get("LABELTREE_BACKEND", "").lower() == "python":
    backend = python_backend
else:
    try:
        from . import _ckernels as backend
    except ImportError:  # extension not built
        backend = python_backend

BACKEND = backend.BACKEND


def available_backends():
    out = {"python": python_backend}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
