"""Numerical information geometry for parametric statistical families."""

from __future__ import annotations

__version__ = "0.1.0"
