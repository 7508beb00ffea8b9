"""
sawstrip - Surface-interacting self-avoiding walks in strips

Transfer-matrix enumeration of walks between an origin boundary and a
weighted surface on the honeycomb, square and triangular lattices, with
crossing estimates of the critical surface fugacity, sequence
extrapolation and exact honeycomb identity checks.
"""

__version__ = "0.1.0"
__author__ = "sawstrip developers"
__license__ = "MIT"

from .core.geometry import LatticeKind, Shape, StripSpec, WalkClass, WeightingMode
from .core.poly import ContactPolynomial
from .core.transfer import SeriesResult, build_A, build_two_variable, estimate_cost
from .core.oracle import enumerate_classes, enumerate_walks
from .analysis.crossing import CrossingEstimate, find_crossing, solve_level
from .analysis.extrapolation import Algorithm, accelerate, estimate_limit
from .analysis.identity import build_patch, check_edge_site_maps, identity_residual

__all__ = [
    "LatticeKind",
    "Shape",
    "StripSpec",
    "WalkClass",
    "WeightingMode",
    "ContactPolynomial",
    "SeriesResult",
    "build_A",
    "build_two_variable",
    "estimate_cost",
    "enumerate_classes",
    "enumerate_walks",
    "CrossingEstimate",
    "find_crossing",
    "solve_level",
    "Algorithm",
    "accelerate",
    "estimate_limit",
    "build_patch",
    "check_edge_site_maps",
    "identity_residual",
]
