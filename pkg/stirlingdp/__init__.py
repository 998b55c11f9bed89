"""Stirling-gamma priors for the precision of Dirichlet-process models"""

__version__ = "0.1.2"
