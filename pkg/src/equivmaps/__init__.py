"""Equivalence maps between density estimation, Poisson process and Gaussian white noise."""

__version__ = "0.1.0"
