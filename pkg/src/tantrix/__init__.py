"""Constant-torsion and constant-curvature approximation of space curves.

Given an immersed space curve or knot with positive curvature and torsion,
this package constructs a C1-close curve of exactly constant torsion (or
constant curvature) in the same isotopy class, and verifies the result
independently of the construction.
"""

from .curves import (
    CurveError,
    FrenetData,
    GeodesicProfile,
    SpaceCurve,
    SphericalCurve,
    average,
    c1_distance,
    frenet,
    geodesic_profile,
    hull_margin,
    resample_arclength,
    tantrix_of,
)
from .reparam import (
    Reparametrization,
    apply_reparam,
    c_bounds,
    integrate_tantrix,
    solve_reparam,
)

__all__ = [
    "CurveError",
    "FrenetData",
    "GeodesicProfile",
    "SpaceCurve",
    "SphericalCurve",
    "average",
    "c1_distance",
    "frenet",
    "geodesic_profile",
    "hull_margin",
    "resample_arclength",
    "tantrix_of",
    "Reparametrization",
    "apply_reparam",
    "c_bounds",
    "integrate_tantrix",
    "solve_reparam",
    "SolveConfig",
    "SolveReport",
    "run",
]

__version__ = "0.1.0"
