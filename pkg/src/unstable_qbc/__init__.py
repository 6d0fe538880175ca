"""Quantum bit commitment with unstable, beta-decaying carriers."""

__version__ = "0.1.0"
