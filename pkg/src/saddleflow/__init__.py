"""Simulation and verification toolkit for Tikhonov-regularised inertial primal-dual dynamics."""

__version__ = "0.1.0"
