"""Simulation, robust phase estimation and bound verification for single-qubit gate calibration."""

__version__ = "0.1.0"
