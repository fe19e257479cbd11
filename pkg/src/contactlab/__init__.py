"""Monte Carlo toolkit for the three-state contact process on the integers."""

__version__ = "0.1.0"
