"""Hierarchy inference for flat sets of detected UI elements."""

__version__ = "0.1.0"
