"""Poisson gradient boosting for tweet virality ranking."""

__version__ = "0.1.0"
