"""Controllability of a 1-D parabolic system coupled through a point mass at the interface."""

from .grid import Grid, SpaceTimeField, build_grid, discrete_norm
from .model import ConfigError, Geometry, ProblemSpec, build_problem, default_problem

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "Geometry",
    "Grid",
    "ProblemSpec",
    "SpaceTimeField",
    "build_grid",
    "build_problem",
    "default_problem",
    "discrete_norm",
]
