"""Numerics for periodic KdV / mKdV with modulated (irregular-in-time) dispersion."""
from __future__ import annotations

__version__ = "0.1.0"
