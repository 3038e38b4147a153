"""Numerical toolkit for the defocusing cubic Schrodinger equation on R x T^3."""

__version__ = "0.1.0"
