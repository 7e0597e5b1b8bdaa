"""Numerical lab for two-dimensional Pauli operators with off-diagonal perturbations."""

__version__ = "0.1.0"
