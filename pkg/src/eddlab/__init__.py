"""Stochastic-geometry simulation lab for stabilizing statistics of point processes."""

__version__ = "0.1.0"
