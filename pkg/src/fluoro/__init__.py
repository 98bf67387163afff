"""Conditional resonance fluorescence of a driven, decaying qubit."""
__version__ = "0.1.0"
