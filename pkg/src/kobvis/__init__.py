"""Numerical experiments on Kobayashi geometry of punctured and pseudo-arc complement domains."""
__version__ = "0.1.0"
