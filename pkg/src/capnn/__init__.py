"""Capacitor-diode analog neural network simulator."""

__version__ = "0.1.0"
