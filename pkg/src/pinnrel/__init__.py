"""Simulation-free reliability analysis with physics-informed neural surrogates."""

__version__ = "0.1.0"
