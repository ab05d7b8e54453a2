"""Simulation and reconstruction of Hadamard-encoded row-column ultrasound imaging."""

__version__ = "0.1.0"
