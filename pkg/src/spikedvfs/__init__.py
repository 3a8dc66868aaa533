"""Deterministic simulator of a 4-PE neuromorphic chip with per-core DVFS."""

__version__ = "0.1.0"
