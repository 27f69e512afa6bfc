"""Newtonian capacity in R^3: Riesz-energy minimisation and an explicit upper bound."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import AdmissibilityError, ConvergenceError, RegimeWarning
from .mesh import _fibonacci_sphere
from .shapes import RadialShape, ball, perimeter, random_shape
from .spherical import evaluate_basis

CAP_UNIT_BALL = 4.0 * math.pi


@dataclass(frozen=True, eq=False)
class RieszSystem:
    """Discretised equilibrium problem on the boundary of a body."""

    points: np.ndarray
    weights: np.ndarray
    gram: np.ndarray = field(repr=False)
    mu: np.ndarray = field(repr=False)
    energy: float
    iterations: int
    gap: float
    trace: np.ndarray = field(repr=False)

    @property
    def capacity(self) -> float:
        # kernel 1/|x-y| without the 1/(4 pi) factor, so Cap = 4 pi / energy
        return CAP_UNIT_BALL / self.energy


def boundary_samples(shape: RadialShape, n_points: int):
    """Fibonacci directions mapped to the boundary with surface weights."""
    dirs = _fibonacci_sphere(n_points)
    active = np.flatnonzero(shape.coeffs)
    modes = [shape.basis.modes[k] for k in active]
    if modes:
        vals, grads = evaluate_basis(3, modes, dirs, derivs=1)
        rho = 1.0 + vals @ shape.coeffs[active]
        grad = np.einsum("nkd,k->nd", grads, shape.coeffs[active])
    else:
        rho = np.ones(n_points)
        grad = np.zeros((n_points, 3))
    if np.any(rho <= 0):
        raise AdmissibilityError("radial function is not positive")
    weights = 4.0 * math.pi / n_points * rho * np.sqrt(rho**2 + np.sum(grad**2, axis=1))
    return np.ascontiguousarray(rho[:, None] * dirs), np.ascontiguousarray(weights)


def riesz_system(shape: RadialShape, n_points: int, tol: float = 1e-8, max_iter: int = 200_000) -> RieszSystem:
    """Minimise mu^T G mu over probability vectors on ``n_points`` boundary samples."""
    if shape.dim != 3:
        raise ValueError("Newtonian capacity is implemented for dim = 3")
    if n_points < 12:
        raise ValueError("need at least 12 sample points")
    pts, w = boundary_samples(shape, n_points)
    G = kernels.riesz_gram(pts, w)
    mu0 = w / w.sum()
    mu, energy, it, gap, trace = kernels.frank_wolfe_away(G, mu0, tol, max_iter)
    if gap >= tol:
        raise ConvergenceError(f"Frank-Wolfe stagnated with gap {gap:.2e} after {it} iterations")
    return RieszSystem(pts, w, G, mu, float(energy), int(it), float(gap), trace)


def riesz_capacity(shape: RadialShape, n_points: int = 2000) -> float:
    return riesz_system(shape, n_points).capacity


def capacity_ladder(shape: RadialShape, sizes=(250, 500, 1000, 2000)) -> list[tuple[int, float]]:
    """Capacity estimates for increasing sample counts."""
    return [(n, riesz_capacity(shape, n)) for n in sizes]


@dataclass(frozen=True)
class CompetitorEnergy:
    total: float
    radial_term: float
    tangential_term: float


def competitor_energy(shape: RadialShape) -> CompetitorEnergy:
    """Dirichlet energy of u_B composed with x -> x / (1 + h(x/|x|)).

    Outside B_h this function equals (1 + h)/|x|, whose squared gradient is
    ((1+h)^2 + |grad h|^2) / r^4; integrating r^2 dr over r > 1 + h gives the
    two surface integrals below.
    """
    if shape.dim != 3:
        raise ValueError("competitor energy is implemented for dim = 3")
    if shape.linf() > 0.5:
        raise AdmissibilityError("competitor bound requires sup|h| <= 1/2")
    rho = shape.rho()
    g2 = np.sum(shape.grad_h() ** 2, axis=1)
    w = shape.basis.quadrature.weights
    radial = float(w @ rho)
    tangential = float(w @ (g2 / rho))
    return CompetitorEnergy(radial + tangential, radial, tangential)


def capacity_upper_gap(shape: RadialShape) -> tuple[float, float]:
    """(competitor energy - Cap(B), squared H^1 norm of h)."""
    return competitor_energy(shape).total - CAP_UNIT_BALL, shape.h1_norm_sq()


def fit_gap_constant(shapes) -> float:
    """Largest ratio gap / |h|_{H^1}^2 over a corpus (shapes with h = 0 are skipped)."""
    best = 0.0
    for s in shapes:
        gap, h1 = capacity_upper_gap(s)
        if h1 > 0:
            best = max(best, gap / h1)
    return best


def capacity_gap_corpus(n: int, seed, l_max: int = 6, max_amplitude: float = 0.3) -> list[dict]:
    """Gap ratios (competitor energy - Cap(B)) / |h|_{H^1}^2 over seeded random bodies.

    Shape i draws from the i-th child of ``SeedSequence(seed)``, so a corpus
    of 2n contains the corpus of n as its first half.
    """
    if n < 1:
        raise ValueError("corpus size must be positive")
    rows = []
    for i, ss in enumerate(np.random.SeedSequence(seed).spawn(n)):
        rng = np.random.default_rng(ss)
        amp = 0.02 + (max_amplitude - 0.02) * rng.random()
        shape = random_shape(rng, 3, l_max, amp)
        gap, h1 = capacity_upper_gap(shape)
        rows.append({"index": i, "linf": shape.linf(), "h1_sq": h1, "gap": gap, "ratio": gap / h1})
    return rows


def weak_stability_margin(shape: RadialShape, eps_cap: float, n_points: int = 2000, eta: float | None = None) -> float:
    """[P + eps/Cap](B_h) - [P + eps/Cap](B), capacities from the Riesz solver.

    The same sample count is used for both bodies so their discretisation
    bias largely cancels. A :class:`RegimeWarning` is issued when the
    W^{1,inf} size of h exceeds ``eta``.
    """
    if shape.dim != 3:
        raise ValueError("weak stability margin is implemented for dim = 3")
    if eta is not None and shape.w1inf() > eta:
        warnings.warn(f"|h|_W1inf = {shape.w1inf():.3g} exceeds eta = {eta:.3g}", RegimeWarning, stacklevel=2)
    ref = ball(3, shape.l_max)
    lhs = perimeter(shape) + eps_cap / riesz_capacity(shape, n_points)
    rhs = perimeter(ref) + eps_cap / riesz_capacity(ref, n_points)
    return lhs - rhs


def logarithmic_capacity(shape: RadialShape) -> float:
    """Planar logarithmic capacity, exp(-Robin constant); not implemented.

    In the plane the Newtonian kernel is replaced by -log|x-y| and the
    capacity is exp(-V) where V is the minimal logarithmic energy of a
    probability measure on the body.
    """
    raise NotImplementedError("logarithmic capacity in the plane is not available")
