"""Hybrid block floating point (HBFP) numerics toolkit."""

__version__ = "0.1.0"
