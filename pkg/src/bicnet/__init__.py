"""Bi-branch text-video retrieval with a spatio-temporal residual transformer."""

__version__ = "0.1.0"
