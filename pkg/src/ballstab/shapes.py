"""Star-shaped bodies described by a radial function rho = 1 + h on the sphere."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from .errors import ConvergenceError, NotStarShapedError
from .spherical import (
    HarmonicBasis,
    _circle_table,
    _sphere_table,
    ball_volume,
    basis_size,
    build_quadrature,
    evaluate_basis,
    get_basis,
    mode_index,
    sobolev_norm,
    sphere_area,
)

SHAPE_HEADER = "#shape v1"
NORMALIZE_MODES = ("unit_volume", "zero_barycenter", "both")


def _l_max_from_size(dim: int, n: int) -> int:
    if dim == 2:
        if n < 1 or n % 2 == 0:
            raise ValueError(f"circle coefficient vectors have odd length, got {n}")
        return (n - 1) // 2
    l = int(round(math.sqrt(n))) - 1
    if (l + 1) ** 2 != n:
        raise ValueError(f"sphere coefficient vectors have square length, got {n}")
    return l


@dataclass(frozen=True, eq=False)
class RadialShape:
    """The body {t(1+h(x))x : 0 <= t < 1, |x| = 1} with h in real harmonics."""

    dim: int
    coeffs: np.ndarray
    l_max: int = field(init=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).ravel()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "l_max", _l_max_from_size(self.dim, len(c)))

    @property
    def basis(self) -> HarmonicBasis:
        return get_basis(self.dim, self.l_max)

    def h(self) -> np.ndarray:
        """h at the quadrature nodes of the basis."""
        return self.basis.synthesize(self.coeffs)

    def rho(self) -> np.ndarray:
        return 1.0 + self.h()

    def grad_h(self) -> np.ndarray:
        return self.basis.synthesize_gradient(self.coeffs)

    def radius(self, points: np.ndarray) -> np.ndarray:
        """rho at arbitrary directions (rows are normalised internally)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
        active = [k for k in np.flatnonzero(self.coeffs)]
        if not active:
            return np.ones(len(pts))
        modes = [self.basis.modes[k] for k in active]
        vals, _ = evaluate_basis(self.dim, modes, pts, derivs=0)
        return 1.0 + vals @ self.coeffs[active]

    def with_coeffs(self, coeffs: np.ndarray) -> "RadialShape":
        return RadialShape(self.dim, coeffs)

    def dilated(self, t: float) -> "RadialShape":
        """The body t*K, i.e. rho -> t*rho."""
        c = t * np.array(self.coeffs)
        c[0] += (t - 1.0) * constant_coefficient(self.dim)
        return RadialShape(self.dim, c)

    def truncated(self, l_max: int) -> "RadialShape":
        return RadialShape(self.dim, resize_coeffs(self.dim, self.coeffs, l_max))

    def linf(self) -> float:
        """sup |h| on a dense grid."""
        return float(np.max(np.abs(_dense_h(self)[0])))

    def w1inf(self) -> float:
        """sup |h| + sup |grad h| on a dense grid."""
        h, g = _dense_h(self)
        return float(np.max(np.abs(h)) + np.max(g))

    def h1_norm_sq(self) -> float:
        return sobolev_norm(self.coeffs, 1.0, self.basis) ** 2


def constant_coefficient(dim: int) -> float:
    """Coefficient of Y_0 representing the constant function 1."""
    return math.sqrt(sphere_area(dim))


def resize_coeffs(dim: int, coeffs: np.ndarray, l_max: int) -> np.ndarray:
    out = np.zeros(basis_size(dim, l_max))
    n = min(len(out), len(coeffs))
    out[:n] = coeffs[:n]
    return out


def ball(dim: int, l_max: int | None = None, radius: float = 1.0) -> RadialShape:
    if l_max is None:
        l_max = 24 if dim == 2 else 12
    c = np.zeros(basis_size(dim, l_max))
    c[0] = (radius - 1.0) * constant_coefficient(dim)
    return RadialShape(dim, c)


def unit_volume_radius(dim: int) -> float:
    """Radius of the ball of volume one."""
    return ball_volume(dim) ** (-1.0 / dim)


def shape_from_modes(dim: int, l_max: int, modes: dict) -> RadialShape:
    """Build h from a {(l, m): amplitude} mapping of normalised harmonics."""
    c = np.zeros(basis_size(dim, l_max))
    for (l, m), a in modes.items():
        c[mode_index(dim, l, m)] += a
    return RadialShape(dim, c)


def shape_from_function(dim: int, l_max: int, rho_fn) -> RadialShape:
    """Project a radial function rho(points) onto the basis."""
    basis = get_basis(dim, l_max)
    rho = np.asarray(rho_fn(basis.quadrature.nodes), dtype=float)
    return RadialShape(dim, basis.project(rho - 1.0))


def _dense_grid(dim: int, l_max: int):
    order = 2 * get_basis(dim, l_max).quadrature.order
    return build_quadrature(dim, order)


@lru_cache(maxsize=16)
def _dense_tables(dim: int, l_max: int):
    """Basis values with first and second angular derivatives on a dense grid."""
    quad = _dense_grid(dim, l_max)
    basis = get_basis(dim, l_max)
    if dim == 2:
        v, d1, d2 = _circle_table(quad.angles, basis.modes, 2)
    else:
        v, d1, d2 = _sphere_table(quad.angles[:, 0], quad.angles[:, 1], basis.modes, 2)
    for arr in (v, d1, d2):
        arr.setflags(write=False)
    return quad, v, d1, d2


def _dense_h(shape: RadialShape):
    """h and |grad h| on the dense grid."""
    quad, v, d1, _ = _dense_tables(shape.dim, shape.l_max)
    h = v @ shape.coeffs
    if shape.dim == 2:
        return h, np.abs(d1 @ shape.coeffs)
    g = np.einsum("nka,k->na", d1, shape.coeffs)
    sp = np.sin(quad.angles[:, 0])
    return h, np.sqrt(g[:, 0] ** 2 + (g[:, 1] / sp) ** 2)


def _checked_rho(shape: RadialShape) -> np.ndarray:
    rho = shape.rho()
    if np.any(rho <= 0.0):
        raise NotStarShapedError("radial function is not positive at every node")
    return rho


def volume(shape: RadialShape) -> float:
    """(1/N) integral of rho^N over the sphere."""
    rho = _checked_rho(shape)
    w = shape.basis.quadrature.weights
    return float(w @ rho**shape.dim) / shape.dim


def perimeter(shape: RadialShape) -> float:
    """Surface measure of the boundary, integral of rho^(N-2) sqrt(rho^2 + |grad rho|^2)."""
    rho = _checked_rho(shape)
    g2 = np.sum(shape.grad_h() ** 2, axis=1)
    w = shape.basis.quadrature.weights
    return float(w @ (rho ** (shape.dim - 2) * np.sqrt(rho**2 + g2)))


def barycenter(shape: RadialShape) -> np.ndarray:
    rho = _checked_rho(shape)
    quad = shape.basis.quadrature
    N = shape.dim
    moment = quad.nodes.T @ (quad.weights * rho ** (N + 1)) / (N + 1)
    return moment / volume(shape)


def volume_gradient(shape: RadialShape) -> np.ndarray:
    """Derivative of the volume with respect to the coefficients of h."""
    rho = _checked_rho(shape)
    b = shape.basis
    return b.values.T @ (b.quadrature.weights * rho ** (shape.dim - 1))


def perimeter_gradient(shape: RadialShape) -> np.ndarray:
    """Derivative of the perimeter with respect to the coefficients of h."""
    rho = _checked_rho(shape)
    b = shape.basis
    N = shape.dim
    g = shape.grad_h()
    s = np.sqrt(rho**2 + np.sum(g**2, axis=1))
    w = b.quadrature.weights
    radial = w * ((N - 2) * rho ** (N - 3) * s + rho ** (N - 1) / s)
    tangential = (w * rho ** (N - 2) / s)[:, None] * g
    return b.values.T @ radial + np.einsum("nkd,nd->k", b.gradients, tangential)


@lru_cache(maxsize=16)
def _linear_modes(dim: int, l_max: int) -> np.ndarray:
    """Coefficient vectors of the coordinate functions x_i restricted to the sphere."""
    b = get_basis(dim, l_max)
    out = np.stack([b.project(b.quadrature.nodes[:, i]) for i in range(dim)])
    out[np.abs(out) < 1e-13] = 0.0
    out.setflags(write=False)
    return out


def normalize(shape: RadialShape, mode: str = "both", tol: float = 1e-10, max_iter: int = 50) -> RadialShape:
    """Impose |K| = |B| and/or zero barycenter by dilation then l=1 translation."""
    if mode not in NORMALIZE_MODES:
        raise ValueError(f"unknown normalisation mode {mode!r}")
    fix_volume = mode in ("unit_volume", "both")
    fix_center = mode in ("zero_barycenter", "both")
    target = ball_volume(shape.dim)
    lin = _linear_modes(shape.dim, shape.l_max)
    current = shape
    for _ in range(max_iter):
        vol_ok = not fix_volume or abs(volume(current) / target - 1.0) <= tol
        bary = barycenter(current) if fix_center else None
        center_ok = not fix_center or np.max(np.abs(bary)) <= tol
        if vol_ok and center_ok:
            return current
        if fix_volume and not vol_ok:
            current = current.dilated((target / volume(current)) ** (1.0 / shape.dim))
        if fix_center:
            bary = barycenter(current)
            current = current.with_coeffs(current.coeffs - bary @ lin)
    raise ConvergenceError(f"normalisation did not converge in {max_iter} iterations")


@dataclass(frozen=True)
class ConvexityReport:
    is_convex: bool
    min_curvature_proxy: float
    violating_nodes: list


def curvature_proxy(shape: RadialShape) -> tuple[np.ndarray, object]:
    """Pointwise convexity indicator on the dense grid.

    On the circle this is rho^2 + 2 rho'^2 - rho rho''. On the sphere it is
    rho^3 times the smallest eigenvalue of Hess u + u I with u = 1/rho, which
    carries the same sign as the second fundamental form of the boundary.
    """
    quad, v, d1, d2 = _dense_tables(shape.dim, shape.l_max)
    c = shape.coeffs
    rho = 1.0 + v @ c
    if np.any(rho <= 0.0):
        raise NotStarShapedError("radial function is not positive on the dense grid")
    if shape.dim == 2:
        r1 = d1 @ c
        r2 = d2 @ c
        return rho**2 + 2.0 * r1**2 - rho * r2, quad
    r1 = np.einsum("nka,k->na", d1, c)
    r2 = np.einsum("nkab,k->nab", d2, c)
    u = 1.0 / rho
    u1 = -r1 / rho[:, None] ** 2
    u2 = -r2 / rho[:, None, None] ** 2 + 2.0 * r1[:, :, None] * r1[:, None, :] / rho[:, None, None] ** 3
    polar = quad.angles[:, 0]
    sp, cot = np.sin(polar), np.cos(polar) / np.sin(polar)
    m11 = u2[:, 0, 0] + u
    m12 = (u2[:, 0, 1] - cot * u1[:, 1]) / sp
    m22 = u2[:, 1, 1] / sp**2 + cot * u1[:, 0] + u
    half_tr = 0.5 * (m11 + m22)
    disc = np.sqrt(0.25 * (m11 - m22) ** 2 + m12**2)
    return (half_tr - disc) * rho**3, quad


def convexity_check(shape: RadialShape, tol: float = 1e-9) -> ConvexityReport:
    proxy, _ = curvature_proxy(shape)
    bad = np.flatnonzero(proxy < -tol)
    m = float(np.min(proxy))
    return ConvexityReport(m >= -tol, m, bad.tolist())


def _circle_points(n: int) -> np.ndarray:
    t = 2.0 * np.pi * np.arange(n) / n
    return np.column_stack([np.cos(t), np.sin(t)])


def _circle_rho(shape: RadialShape, theta: np.ndarray) -> np.ndarray:
    return shape.radius(np.column_stack([np.cos(theta), np.sin(theta)]))


def symmetric_difference(a: RadialShape, b: RadialShape) -> float:
    """|A delta B| = (1/N) integral of |rho_a^N - rho_b^N| for co-star-shaped bodies."""
    if a.dim != b.dim:
        raise ValueError("shapes live in different dimensions")
    N = a.dim
    if N == 3:
        order = 4 * max(get_basis(3, a.l_max).quadrature.order, get_basis(3, b.l_max).quadrature.order)
        quad = build_quadrature(3, order)
        f = a.radius(quad.nodes) ** 3 - b.radius(quad.nodes) ** 3
        return float(quad.weights @ np.abs(f)) / 3.0

    def f(theta):
        return _circle_rho(a, theta) ** 2 - _circle_rho(b, theta) ** 2

    n = 4096
    grid = 2.0 * np.pi * np.arange(n + 1) / n
    vals = f(grid)
    if np.all(vals[:-1] == 0.0):
        return 0.0
    roots = []
    for i in range(n):
        if vals[i] == 0.0:
            roots.append(grid[i])
        elif vals[i] * vals[i + 1] < 0.0:
            roots.append(brentq(lambda t: float(f(np.array([t]))[0]), grid[i], grid[i + 1], xtol=1e-15))
    if not roots:
        w = 2.0 * np.pi / n
        return abs(float(np.sum(vals[:-1]) * w)) / 2.0
    roots = np.array(roots)
    ends = np.append(roots[1:], roots[0] + 2.0 * np.pi)
    x, w = np.polynomial.legendre.leggauss(64)
    total = 0.0
    for lo, hi in zip(roots, ends):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        total += abs(float(w @ f(mid + half * x)) * half)
    return total / 2.0


def _boundary_cloud(shape: RadialShape, n_circle: int = 8192, order_sphere: int = 160):
    if shape.dim == 2:
        dirs = _circle_points(n_circle)
    else:
        dirs = build_quadrature(3, order_sphere).nodes
    return dirs, shape.radius(dirs)


def hausdorff_distance(a: RadialShape, b: RadialShape) -> float:
    """Hausdorff distance between two co-star-shaped bodies from dense boundary samples."""
    if a.dim != b.dim:
        raise ValueError("shapes live in different dimensions")
    dirs, ra = _boundary_cloud(a)
    _, rb = _boundary_cloud(b)
    pa, pb = ra[:, None] * dirs, rb[:, None] * dirs
    out = 0.0
    for src, dst, r_src, r_dst in ((pa, pb, ra, rb), (pb, pa, rb, ra)):
        outside = r_src > r_dst
        if outside.any():
            d, _ = cKDTree(dst).query(src[outside])
            out = max(out, float(np.max(d)))
    return out


def random_shape(
    rng: np.random.Generator,
    dim: int,
    l_max: int,
    amplitude: float,
    decay: float = 2.0,
    l_min: int = 2,
    normalize_mode: str | None = "both",
) -> RadialShape:
    """Random band-limited perturbation with sup|h| close to ``amplitude``.

    Coefficients are Gaussian with standard deviation (1+l)^(-decay) for
    l >= l_min, rescaled so the dense-grid sup norm equals ``amplitude``.
    """
    b = get_basis(dim, l_max)
    sd = np.where(b.degrees >= l_min, (1.0 + b.degrees) ** (-float(decay)), 0.0)
    c = rng.standard_normal(b.size) * sd
    base = RadialShape(dim, c)
    sup = base.linf()
    if sup == 0.0:
        return ball(dim, l_max)
    shape = RadialShape(dim, c * (amplitude / sup))
    if normalize_mode is None:
        return shape
    for _ in range(20):
        out = normalize(shape, normalize_mode)
        if out.linf() <= amplitude * (1.0 + 1e-12):
            return out
        shape = RadialShape(dim, shape.coeffs * 0.98)
    return out


def write_shape(path: str | Path, shape: RadialShape) -> None:
    record = {
        "dim": shape.dim,
        "l_max": shape.l_max,
        "basis": "real_harmonics",
        "coeffs": [float(x) for x in shape.coeffs],
    }
    Path(path).write_text(SHAPE_HEADER + "\n" + json.dumps(record, indent=1) + "\n")


def read_shape(path: str | Path) -> RadialShape:
    text = Path(path).read_text()
    head, _, body = text.partition("\n")
    if head.strip() != SHAPE_HEADER:
        raise ValueError(f"{path}: missing '{SHAPE_HEADER}' header")
    rec = json.loads(body)
    if rec.get("basis") != "real_harmonics":
        raise ValueError(f"{path}: unsupported basis {rec.get('basis')!r}")
    dim, l_max = int(rec["dim"]), int(rec["l_max"])
    coeffs = np.asarray(rec["coeffs"], dtype=float)
    if len(coeffs) != basis_size(dim, l_max):
        raise ValueError(f"{path}: coefficient count does not match l_max")
    return RadialShape(dim, coeffs)
