"""Quantum Hall edge-state models: spectra, currents, Mourre bounds."""

__version__ = "0.1.0"
