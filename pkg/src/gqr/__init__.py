"""Gaussian-state simulation of reflectivity sensing with entangled and induced-coherence radars."""

__version__ = "0.1.0"
