"""Numerical laboratory for quantified quantum proof systems and quantified Hamiltonians."""

__version__ = "0.1.0"
