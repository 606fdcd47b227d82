"""Boundary regularity of Neumann problems via the reduced dynamical system."""

__version__ = "0.1.0"
