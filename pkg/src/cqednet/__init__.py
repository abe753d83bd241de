"""Cavity-QED network surface-code simulator."""

__version__ = "0.1.0"
