"""Exact tools for translation-dilation invariant polynomial systems."""

__version__ = "0.1.0"
