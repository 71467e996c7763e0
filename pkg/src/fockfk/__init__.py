"""Feynman-Kac Monte Carlo on truncated Fock spaces with exact matrix oracles."""
__version__ = "0.1.0"
