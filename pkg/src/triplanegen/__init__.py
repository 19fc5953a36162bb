"""Triplane neural fields with a cross-plane diffusion transformer."""

__version__ = "0.1.0"
