"""Fractional Dirichlet reaction-diffusion laboratory."""

__version__ = "0.1.0"
