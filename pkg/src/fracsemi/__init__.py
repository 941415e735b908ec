"""Numerical laboratory for the fractional p-Laplacian."""
from __future__ import annotations

__version__ = "0.1.0"
