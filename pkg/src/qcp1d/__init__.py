"""Steady-state toolkit for the dissipative quantum contact process in 1D."""

__version__ = "0.1.0"
