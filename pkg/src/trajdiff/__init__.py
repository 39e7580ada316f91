"""Diffusion-based multi-agent trajectory prediction with graph conditioning
and differentially constrained decoding."""

__version__ = "0.1.0"
