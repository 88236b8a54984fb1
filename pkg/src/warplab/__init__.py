"""Numerical laboratory for rotationally symmetric warped-product 3-spheres.

A metric ``ds^2 + f(s)^2 g_{S^2}`` on ``[0, L] x S^2`` is described by its
warping function ``f``.  The subpackages compute pointwise curvature, volumes,
minimal spheres, geodesic distances, sequence convergence diagnostics and
intrinsic-flat distance upper bounds for such metrics.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConstructionError,
    DisconnectedRegionError,
    DomainError,
    EmptyWindowError,
    PoleProximityError,
    PreconditionError,
    ShapeError,
    UnsupportedPointError,
    WarpLabError,
    WindowDisconnectedError,
)
from .grid import GridFunction  # noqa: F401
from .tolerances import Tolerances, DEFAULT_TOLERANCES  # noqa: F401
