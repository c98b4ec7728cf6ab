"""Density tensor hierarchies for open quantum systems."""

__version__ = "0.1.0"
