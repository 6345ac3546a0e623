"""Normalized solutions of the symmetric two-component cubic Schroedinger system on radial grids."""

__version__ = "0.1.0"
