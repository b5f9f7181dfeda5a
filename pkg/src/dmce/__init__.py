"""Diffusion-model prior for MIMO channel estimation."""

__version__ = "0.1.0"
