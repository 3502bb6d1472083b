"""Geometric multigrid for unfitted P1 finite elements on Poisson interface problems."""

__version__ = "0.1.0"
