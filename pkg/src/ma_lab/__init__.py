"""Numerical laboratory for Alexandrov solutions of det D^2 u = f."""
__version__ = "0.1.0"
SCHEMA = "ma-lab/1"
