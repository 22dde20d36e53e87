"""Superradiant beam laser: Langevin simulation, mean-field theory and design tables."""

__version__ = "0.1.0"
