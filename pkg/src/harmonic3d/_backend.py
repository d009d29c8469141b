"""Select the overlap kernel implementation at import time.

The compiled Cython module is used when it is importable; otherwise the
pure-Python fallback. ``HARMONIC3D_BACKEND=python`` forces the fallback.
"""

import os

from harmonic3d import _geom_py

if os.environ.get("HARMONIC3D_BACKEND", "").lower() == "python":
    kernel = _geom_py
    BACKEND = "python"
else:
    try:
        from harmonic3d import _geomkernel as kernel
        BACKEND = "cython"
    except ImportError:  # extension not built
        kernel = _geom_py
        BACKEND = "python"

__all__ = ["kernel", "BACKEND"]
