"""Numerical checks for nonsmooth global implicit-function and inversion theorems."""

__version__ = "0.1.0"
