"""Repelling-agent control of planar sets and sweeping-process approximation."""

__version__ = "0.1.0"
