"""Pseudo-spectral 2D vorticity solver and scale-resolved cascade diagnostics."""

__version__ = "0.1.0"
