"""Adaptive video streaming over LTE-A with licensed assisted access."""

__version__ = "0.1.0"
