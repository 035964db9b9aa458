"""Maximum principles and solvers for operators that degenerate on part of the boundary."""
from .operator_core import (
    BoundaryClassification,
    CoefficientField,
    Grid,
    ScalarField,
    SpatialDomain,
    apply_operator,
    classify_boundary,
    make_grid,
)

__version__ = "0.1.0"

__all__ = [
    "BoundaryClassification",
    "CoefficientField",
    "Grid",
    "ScalarField",
    "SpatialDomain",
    "apply_operator",
    "classify_boundary",
    "make_grid",
]
