"""Simulation and averaging tools for the adiabatic piston problem."""

__version__ = "0.1.0"
