"""Executable model of a mobile platform security model."""

__version__ = "0.1.0"
