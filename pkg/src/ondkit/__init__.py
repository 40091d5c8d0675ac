"""Incremental object-level novelty detection on frozen detector features."""

__version__ = "0.1.0"
