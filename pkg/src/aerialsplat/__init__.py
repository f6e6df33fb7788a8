"""Sparse-view aerial Gaussian reconstruction with gated residual completion."""

__version__ = "0.1.0"
