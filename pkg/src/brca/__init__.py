"""Simulation and Monte Carlo verification toolkit for functional
autoregressive processes with random operator coefficients."""

__version__ = "0.1.0"
