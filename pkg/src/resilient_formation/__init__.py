"""Simulation and analysis of spoofing-resilient multi-agent formation control."""

__version__ = "0.1.0"
