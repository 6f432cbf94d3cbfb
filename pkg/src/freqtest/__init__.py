"""Streaming tests of frequency profiles under the relative Frechet distance."""
from __future__ import annotations

__version__ = "0.1.0"
