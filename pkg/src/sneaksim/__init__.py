"""Sneaking detection from VR motion traces and a stealth-game simulator."""

__version__ = "0.1.0"
