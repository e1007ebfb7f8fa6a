"""Hamiltonian identification for controlled two-level systems from sigma_z data."""

__version__ = "0.1.0"
