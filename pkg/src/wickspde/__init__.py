"""Spectral-Galerkin simulation of Wick-renormalized heat and wave equations
on the 2-torus driven by subordinate cylindrical Brownian noise."""

__version__ = "0.1.0"
