"""Supervised phase-configuration learning for multi-RIS links."""

__version__ = "0.1.0"
