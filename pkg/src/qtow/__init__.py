"""Quantum tug-of-war decision making on two-armed bandits, with a classical
baseline and a KCBS contextuality toolkit."""

__version__ = "0.1.0"
