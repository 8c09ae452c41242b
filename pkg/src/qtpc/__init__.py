"""Delayed-measurement EPR attacks on quantum two-party computations."""

__version__ = "0.1.0"
