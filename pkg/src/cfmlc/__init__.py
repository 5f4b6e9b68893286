"""Compute-and-forward with product lattices and multilevel coding over Z, Z[i] and Z[w]."""

__version__ = "0.1.0"
