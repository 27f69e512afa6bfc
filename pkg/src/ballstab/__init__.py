"""Numerical tools for the stability of the ball under perimeter, eigenvalue and capacity functionals."""

from .capacity import competitor_energy, riesz_capacity
from .fem import cached_mesh, lambda1
from .kernels import BACKEND
from .mesh import build_mesh
from .shapes import (
    RadialShape,
    ball,
    barycenter,
    convexity_check,
    normalize,
    perimeter,
    read_shape,
    shape_from_modes,
    volume,
    write_shape,
)
from .spherical import bessel_first_zero, build_quadrature, get_basis, sobolev_norm
from .stability import analytic_mode_spectrum, c_star_formula, fuglede_remainder, mode_spectrum

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "RadialShape",
    "analytic_mode_spectrum",
    "ball",
    "barycenter",
    "bessel_first_zero",
    "build_mesh",
    "build_quadrature",
    "c_star_formula",
    "cached_mesh",
    "competitor_energy",
    "convexity_check",
    "fuglede_remainder",
    "get_basis",
    "lambda1",
    "mode_spectrum",
    "normalize",
    "perimeter",
    "read_shape",
    "riesz_capacity",
    "shape_from_modes",
    "sobolev_norm",
    "volume",
    "write_shape",
]
