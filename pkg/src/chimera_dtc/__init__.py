"""Exact stroboscopic simulation of regionally driven Floquet spin networks."""

__version__ = "0.1.0"
