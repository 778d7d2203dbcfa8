"""Monotone triangular transport maps for pairwise smoothing couplings.

The subpackage is organized bottom-up: `basis` holds the function dictionary
and quadrature rules, `maps` the monotone components and their composition,
`targets` the pair log-densities being matched, and `fitting` the quadrature
KL objective with its Newton solver.
"""

from .basis import (
    GaussHermiteRule,
    gauss_legendre_01,
    hermite_polynomial,
    make_quadrature,
    tensor_grid,
)
from .maps import (
    MapComposition,
    MonotoneComponent,
    TriangularMap,
    apply_composition,
    identity_pair_map,
    load_maps,
    save_maps,
)
from .targets import PairTarget, build_pair_target
from .fitting import (
    FitResult,
    build_level_maps,
    fit_pair_map,
    kl_objective,
    level_tolerance,
)

__all__ = [
    "GaussHermiteRule",
    "gauss_legendre_01",
    "hermite_polynomial",
    "make_quadrature",
    "tensor_grid",
    "MapComposition",
    "MonotoneComponent",
    "TriangularMap",
    "apply_composition",
    "identity_pair_map",
    "load_maps",
    "save_maps",
    "PairTarget",
    "build_pair_target",
    "FitResult",
    "build_level_maps",
    "fit_pair_map",
    "kl_objective",
    "level_tolerance",
]
