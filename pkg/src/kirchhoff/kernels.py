"""Kernel backend selection.

The compiled extension is used when importable; set ``KIRCHHOFF_PURE=1`` to
force the pure-Python implementation.
"""

import os

from . import _pykernels as python

if os.environ.get("KIRCHHOFF_PURE", "") not in ("", "0"):
    active = python
else:
    try:
        from . import _kernels as active
    except ImportError:  # extension not built
        active = python

BACKEND = active.BACKEND


def available():
    """Names of the importable backends."""
    names = ["python"]
    try:
        from . import _kernels  # noqa: F401

        names.insert(0, "compiled")
    except ImportError:
        pass
    return names


def get(name=None):
    if name is None:
        return active
    if name == "python":
        return python
    if name == "compiled":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")
