"""Simulation and verification suite for a crowded active-Brownian-particle
PDE with size exclusion: primal and dual solvers, mollified initial data,
stationary-state analysis, and structural-estimate diagnostics."""

__version__ = "0.1.0"

from .grid import GridSpec
from .params import ModelParams

__all__ = ["GridSpec", "ModelParams", "__version__"]
