"""Normalized solutions of a two-component Schrodinger system with Sobolev-critical coupling.

The package covers radial grids and energy functionals, the local minimizer
and the mountain-pass solution on the product of mass spheres, bubble
insertion estimates, and brute-force checks of the supporting inequalities.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .functionals import ProblemParams, SolveReport, energy, pohozaev
from .radial_grid import FieldPair, GridSpec, RadialField, make_grid

__all__ = [
    "FieldPair",
    "GridSpec",
    "ProblemParams",
    "RadialField",
    "SolveReport",
    "energy",
    "make_grid",
    "pohozaev",
    "__version__",
]
