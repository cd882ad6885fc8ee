"""Counting functions, Littlewood-Paley identities and truncated composition
operators for Dirichlet-series symbols."""

__version__ = "0.1.0"
