"""Trained Rank Pruning for small convolutional networks, in NumPy (+ numba)."""
__version__ = "0.1.0"
