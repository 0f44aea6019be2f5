"""Exact and semiclassical scrambling dynamics of the Bose-Hubbard dimer and the Dicke model."""

__version__ = "0.1.0"
