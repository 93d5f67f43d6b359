"""Kernel-ARMA Grassmannian features and geodesic clustering for dynamic networks."""

__version__ = "0.1.0"
