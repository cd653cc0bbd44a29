"""Bayesian structure learning for sparse Gaussian graphical models."""

__version__ = "0.1.0"
