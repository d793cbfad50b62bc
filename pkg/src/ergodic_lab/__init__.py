"""Simulation and verification lab for long-time behaviour of stochastic processes."""

__version__ = "0.1.0"
