"""Taxi walks on the Manhattan lattice and the hard-core model on Z^2."""

__version__ = "0.1.0"
