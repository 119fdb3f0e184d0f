"""Numerical laboratory for the energy-critical cubic NLS system in dimension 4."""

__version__ = "0.1.0"
