"""Exact S-arithmetic quadratic form counting and Rogers-type moment experiments."""

__version__ = "0.1.0"
