"""Quadrature, real harmonic bases and special functions on S^1 and S^2."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import sph_harm_y

from .errors import BracketError

SUPPORTED_DIMS = (2, 3)


def sphere_area(dim: int) -> float:
    """Surface measure of the unit sphere in R^dim."""
    _check_dim(dim)
    return 2.0 * math.pi if dim == 2 else 4.0 * math.pi


def ball_volume(dim: int) -> float:
    """Lebesgue measure of the unit ball in R^dim."""
    return sphere_area(dim) / dim


def _check_dim(dim: int) -> None:
    if dim not in SUPPORTED_DIMS:
        raise ValueError(f"unsupported dimension {dim}; expected 2 or 3")


@dataclass(frozen=True)
class SphereQuadrature:
    """Nodes and weights on the unit sphere.

    ``angles`` holds the angular coordinates of each node: the polar angle
    theta for the circle, and (polar, azimuth) columns for the 2-sphere.
    """

    dim: int
    nodes: np.ndarray
    weights: np.ndarray
    order: int
    angles: np.ndarray

    @property
    def size(self) -> int:
        return len(self.weights)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Integrate samples (first axis over nodes) against the rule."""
        return np.tensordot(self.weights, values, axes=(0, 0))


@lru_cache(maxsize=64)
def build_quadrature(dim: int, order: int) -> SphereQuadrature:
    """Return a rule exact for spherical polynomials of degree <= order."""
    _check_dim(dim)
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    if dim == 2:
        n = 2 * order + 1
        theta = 2.0 * np.pi * np.arange(n) / n
        nodes = np.column_stack([np.cos(theta), np.sin(theta)])
        weights = np.full(n, 2.0 * np.pi / n)
        angles = theta
    else:
        n_polar = order // 2 + 1
        n_azim = order + 1
        z, wz = np.polynomial.legendre.leggauss(n_polar)
        polar = np.arccos(z)
        azim = 2.0 * np.pi * np.arange(n_azim) / n_azim
        P, A = np.meshgrid(polar, azim, indexing="ij")
        W = np.outer(wz, np.full(n_azim, 2.0 * np.pi / n_azim))
        P, A, W = P.ravel(), A.ravel(), W.ravel()
        nodes = np.column_stack([np.sin(P) * np.cos(A), np.sin(P) * np.sin(A), np.cos(P)])
        weights = W
        angles = np.column_stack([P, A])
    for arr in (nodes, weights, angles):
        arr.setflags(write=False)
    return SphereQuadrature(dim, nodes, weights, order, angles)


def basis_size(dim: int, l_max: int) -> int:
    _check_dim(dim)
    return 2 * l_max + 1 if dim == 2 else (l_max + 1) ** 2


def mode_index(dim: int, l: int, m: int) -> int:
    """Position of the real harmonic (l, m) in the coefficient vector."""
    if abs(m) > l:
        raise ValueError(f"invalid mode ({l}, {m})")
    if dim == 2:
        if l == 0:
            return 0
        if m not in (-l, l):
            raise ValueError(f"circle harmonics have m = +-l, got ({l}, {m})")
        return 2 * l - 1 if m < 0 else 2 * l
    _check_dim(dim)
    return l * l + l + m


def mode_list(dim: int, l_max: int) -> list[tuple[int, int]]:
    """All (l, m) labels in storage order."""
    if dim == 2:
        out = [(0, 0)]
        for l in range(1, l_max + 1):
            out += [(l, -l), (l, l)]
        return out
    _check_dim(dim)
    return [(l, m) for l in range(l_max + 1) for m in range(-l, l + 1)]


def laplace_eigenvalue(dim: int, l: int | np.ndarray) -> np.ndarray:
    return l * (l + dim - 2)


def _as_unit(points: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return points / np.linalg.norm(points, axis=1, keepdims=True)


def _circle_table(theta: np.ndarray, modes, derivs: int):
    """Values and theta-derivatives (up to ``derivs``) of circle harmonics."""
    n = len(theta)
    out = [np.empty((n, len(modes))) for _ in range(derivs + 1)]
    inv = 1.0 / math.sqrt(math.pi)
    for k, (l, m) in enumerate(modes):
        if l == 0:
            out[0][:, k] = 1.0 / math.sqrt(2.0 * math.pi)
            for d in range(1, derivs + 1):
                out[d][:, k] = 0.0
            continue
        c, s = np.cos(l * theta), np.sin(l * theta)
        # d/dtheta cycles cos -> -sin -> -cos -> sin
        if m > 0:
            cycle = (c, -l * s, -l * l * c)
        else:
            cycle = (s, l * c, -l * l * s)
        for d in range(derivs + 1):
            out[d][:, k] = inv * cycle[d]
    return out


def _sphere_table(polar: np.ndarray, azim: np.ndarray, modes, derivs: int):
    """Real harmonics on S^2 with partial derivatives in (polar, azimuth).

    Returns value table (n, nb), first derivatives (n, nb, 2) and, when
    ``derivs == 2``, second derivatives (n, nb, 2, 2).
    """
    n = len(polar)
    nb = len(modes)
    val = np.empty((n, nb))
    d1 = np.empty((n, nb, 2)) if derivs >= 1 else None
    d2 = np.empty((n, nb, 2, 2)) if derivs >= 2 else None
    cache: dict[tuple[int, int], tuple] = {}
    for k, (l, m) in enumerate(modes):
        key = (l, abs(m))
        if key not in cache:
            cache[key] = sph_harm_y(l, abs(m), polar, azim, diff_n=derivs)
        res = cache[key]
        if derivs == 0:
            res = (res,)
        if m == 0:
            f = np.real
            scale = 1.0
        else:
            f = np.real if m > 0 else np.imag
            scale = math.sqrt(2.0) * (-1.0) ** m
        val[:, k] = scale * f(res[0])
        if d1 is not None:
            d1[:, k, :] = scale * f(res[1])
        if d2 is not None:
            d2[:, k, :, :] = scale * f(res[2])
    return val, d1, d2


def _frame(polar: np.ndarray, azim: np.ndarray):
    """Orthonormal tangent frame (e_polar, e_azimuth) at each point of S^2."""
    sp, cp, sa, ca = np.sin(polar), np.cos(polar), np.sin(azim), np.cos(azim)
    e_pol = np.column_stack([cp * ca, cp * sa, -sp])
    e_az = np.column_stack([-sa, ca, np.zeros_like(sa)])
    return e_pol, e_az


@dataclass(frozen=True, eq=False)
class HarmonicBasis:
    """Orthonormal real harmonics tabulated on a quadrature rule."""

    dim: int
    l_max: int
    quadrature: SphereQuadrature
    modes: tuple
    degrees: np.ndarray
    eigenvalues: np.ndarray
    values: np.ndarray
    gradients: np.ndarray

    @property
    def size(self) -> int:
        return len(self.modes)

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        """Sample sum_k c_k Y_k at the quadrature nodes."""
        return self.values @ coeffs

    def synthesize_gradient(self, coeffs: np.ndarray) -> np.ndarray:
        return np.einsum("nkd,k->nd", self.gradients, coeffs)

    def project(self, samples: np.ndarray) -> np.ndarray:
        """L2 projection of node samples onto the basis."""
        return self.values.T @ (self.quadrature.weights * samples)

    def evaluate(self, points: np.ndarray, derivs: int = 1):
        """Evaluate the basis at arbitrary directions.

        Returns ``(values, gradients)`` where gradients are Cartesian
        tangential vectors of shape (n, nb, dim).
        """
        points = _as_unit(points)
        return evaluate_basis(self.dim, self.modes, points, derivs)

    def mode_vector(self, l: int, m: int | None = None) -> np.ndarray:
        """Coefficient vector of a single harmonic.

        ``m`` defaults to the cosine mode on the circle and the zonal mode
        on the sphere.
        """
        if m is None:
            m = l if self.dim == 2 else 0
        c = np.zeros(self.size)
        c[mode_index(self.dim, l, m)] = 1.0
        return c


def evaluate_basis(dim: int, modes, points: np.ndarray, derivs: int = 1):
    """Values and Cartesian tangential gradients of ``modes`` at unit ``points``."""
    if dim == 2:
        theta = np.arctan2(points[:, 1], points[:, 0])
        tab = _circle_table(theta, modes, min(derivs, 1))
        if derivs == 0:
            return tab[0], None
        tangent = np.column_stack([-np.sin(theta), np.cos(theta)])
        grads = tab[1][:, :, None] * tangent[:, None, :]
        return tab[0], grads
    polar = np.arccos(np.clip(points[:, 2], -1.0, 1.0))
    azim = np.arctan2(points[:, 1], points[:, 0])
    val, d1, _ = _sphere_table(polar, azim, modes, min(derivs, 1))
    if derivs == 0:
        return val, None
    e_pol, e_az = _frame(polar, azim)
    sp = np.sin(polar)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_sp = np.where(sp > 1e-14, 1.0 / sp, 0.0)
    grads = d1[:, :, 0, None] * e_pol[:, None, :] + (d1[:, :, 1] * inv_sp[:, None])[:, :, None] * e_az[:, None, :]
    return val, grads


def default_order(l_max: int) -> int:
    return 4 * l_max + 8


@lru_cache(maxsize=32)
def get_basis(dim: int, l_max: int, order: int | None = None) -> HarmonicBasis:
    """Cached basis with quadrature of the given order (default 4*l_max + 8)."""
    _check_dim(dim)
    if l_max < 0:
        raise ValueError("l_max must be nonnegative")
    if order is None:
        order = default_order(l_max)
    quad = build_quadrature(dim, order)
    modes = tuple(mode_list(dim, l_max))
    values, grads = evaluate_basis(dim, modes, quad.nodes, derivs=1)
    degrees = np.array([l for l, _ in modes])
    eig = laplace_eigenvalue(dim, degrees).astype(float)
    for arr in (values, grads, degrees, eig):
        arr.setflags(write=False)
    return HarmonicBasis(dim, l_max, quad, modes, degrees, eig, values, grads)


def sobolev_norm(coeffs: np.ndarray, s: float, basis: HarmonicBasis) -> float:
    """Spectral H^s norm, (sum (1 + l(l+N-2))^s c^2)^(1/2)."""
    if not -1.0 <= s <= 1.0:
        raise ValueError("Sobolev index must lie in [-1, 1]")
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (basis.size,):
        raise ValueError(f"expected {basis.size} coefficients, got {coeffs.shape}")
    w = (1.0 + basis.eigenvalues) ** s
    return float(np.sqrt(np.sum(w * coeffs**2)))


def bessel_j(nu: float, x: float | np.ndarray, terms: int = 60) -> np.ndarray:
    """Bessel function of the first kind from its power series.

    Accurate for moderate arguments (|x| below roughly 20).
    """
    x = np.asarray(x, dtype=float)
    half = 0.5 * x
    total = np.zeros_like(x)
    term = half**nu / math.gamma(nu + 1.0)
    for k in range(terms):
        total = total + term
        term = -term * half * half / ((k + 1) * (k + 1 + nu))
    return total


def bessel_first_zero(nu: float, tol: float = 1e-12) -> float:
    """First positive zero of J_nu by bisection on [nu + 1, nu + 4]."""
    if nu < 0:
        raise ValueError("order must be nonnegative")
    a, b = nu + 1.0, nu + 4.0
    fa, fb = float(bessel_j(nu, a)), float(bessel_j(nu, b))
    if fa * fb > 0:
        raise BracketError(f"J_{nu} does not change sign on [{a}, {b}]")
    while b - a > tol:
        mid = 0.5 * (a + b)
        fm = float(bessel_j(nu, mid))
        if fm == 0.0:
            return mid
        if fa * fm < 0:
            b = mid
        else:
            a, fa = mid, fm
    return 0.5 * (a + b)


def holder_seminorm(
    samples: np.ndarray,
    alpha: float,
    angles: np.ndarray | None = None,
    points: np.ndarray | None = None,
    derivative: bool = False,
) -> float:
    """Discrete Hölder seminorm max |f(x)-f(y)| / d(x,y)^alpha over node pairs.

    Distances are geodesic. On the circle pass ``angles`` (default: uniform
    full-circle grid); on the sphere pass unit ``points``. With
    ``derivative=True`` the samples are first differentiated along a circle
    grid (periodic when the grid covers the full circle), giving the C^{1,alpha}
    variant.
    """
    f = np.asarray(samples, dtype=float)
    if f.shape[0] < 2:
        raise ValueError("need at least two samples")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    if points is not None:
        pts = _as_unit(points)
        dist = np.arccos(np.clip(pts @ pts.T, -1.0, 1.0))
        if derivative:
            raise ValueError("derivative variant needs circle samples; pass gradients instead")
    else:
        n = f.shape[0]
        full = angles is None
        if full:
            angles = 2.0 * np.pi * np.arange(n) / n
        angles = np.asarray(angles, dtype=float)
        span = angles[-1] - angles[0]
        periodic = full or abs(span + (angles[1] - angles[0]) - 2 * np.pi) < 1e-9
        if derivative:
            if periodic:
                step = 2.0 * np.pi / n
                f = (np.roll(f, -1, axis=0) - np.roll(f, 1, axis=0)) / (2.0 * step)
            else:
                f = np.gradient(f, angles, axis=0)
        diff = np.abs(angles[:, None] - angles[None, :])
        dist = np.minimum(diff, 2.0 * np.pi - diff) if periodic else diff
    if f.ndim == 1:
        df = np.abs(f[:, None] - f[None, :])
    else:
        df = np.linalg.norm(f[:, None, :] - f[None, :, :], axis=-1)
    mask = dist > 1e-14
    if not mask.any():
        return 0.0
    return float(np.max(df[mask] / dist[mask] ** alpha))
