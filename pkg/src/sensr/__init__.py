"""Individually fair classifiers via sensitive-subspace distributionally robust training."""

__version__ = "0.1.0"
