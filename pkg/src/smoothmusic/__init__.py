"""Spatial-smoothing subspace DoA estimation with random-matrix corrections."""

from smoothmusic import array_model, montecarlo, rmt, subspace, verify

__version__ = "0.1.0"

__all__ = ["array_model", "montecarlo", "rmt", "subspace", "verify", "__version__"]
