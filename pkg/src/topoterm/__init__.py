"""Dialogue term detection from topological features of word-embedding neighborhoods."""

__version__ = "0.1.0"
