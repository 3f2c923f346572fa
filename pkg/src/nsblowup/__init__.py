"""Forced Navier-Stokes blow-up laboratory."""

__version__ = "0.1.0"
