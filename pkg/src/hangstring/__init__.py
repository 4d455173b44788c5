"""Numerical companion for the degenerate hyperbolic system of a hanging string."""

from .mesh import GridFn, Mesh, make_mesh
from .evolution import make_coefficients, solve_ibvp
from .background import make_straight_background, make_swaying_background

__version__ = "0.1.0"

__all__ = ["GridFn", "Mesh", "make_mesh", "make_coefficients", "solve_ibvp", "make_straight_background",
           "make_swaying_background", "__version__"]
