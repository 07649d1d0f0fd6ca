"""Simulation of skin heating by focused airborne ultrasound."""

__version__ = "0.1.0"
