"""Numerical workbench for the compressible Euler equations on the 3-torus."""

__version__ = "0.1.0"
