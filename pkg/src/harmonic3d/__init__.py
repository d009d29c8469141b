"""Harmonic multi-task loss for 3D detection, with a rotated-box evaluation toolkit."""

from harmonic3d._backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
