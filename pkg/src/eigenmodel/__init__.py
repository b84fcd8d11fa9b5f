"""Latent class, distance and eigenmodels for symmetric relational data."""

__version__ = "0.1.0"
