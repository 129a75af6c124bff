"""Carnot groups, sub-Laplace Dirichlet problems and numerical Schauder checks."""

from .groups import (
    GroupSpec,
    VectorField,
    distance,
    dilate,
    engel,
    gauge_norm,
    heisenberg,
    homogeneous_dimension,
    inverse,
    left_invariant_fields,
    multiply,
    named_group,
)
from .poly import GradedPolynomial

__all__ = [
    "GradedPolynomial",
    "GroupSpec",
    "VectorField",
    "distance",
    "dilate",
    "engel",
    "gauge_norm",
    "heisenberg",
    "homogeneous_dimension",
    "inverse",
    "left_invariant_fields",
    "multiply",
    "named_group",
]
