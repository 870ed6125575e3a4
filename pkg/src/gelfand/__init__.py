"""Numerics for blow-up solutions of the two-dimensional Gel'fand problem."""

__version__ = "0.1.0"
