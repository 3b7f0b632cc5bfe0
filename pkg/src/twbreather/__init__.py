"""Truncated-Wigner simulation of breather relaxation in the attractive 1D Bose gas."""

__version__ = "0.1.0"
