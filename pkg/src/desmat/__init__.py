"""Sparse sensing-matrix design by density evolution over factor-graph ensembles."""

__version__ = "0.1.0"
