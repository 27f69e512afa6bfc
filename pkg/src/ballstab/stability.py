"""Second-order behaviour of P, lambda_1 and capacity at the ball.

Conventions: shapes live in the chart where the reference body is the unit
ball (|B| = omega_N). Quadratic forms are second derivatives at t = 0 along
t -> normalize(B_{tY}) for a harmonic direction Y. Thresholds are reported for
unit-volume bodies, J_c(K) = P(K) - c lambda_1(K) with |K| = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .capacity import competitor_energy
from .errors import ConvergenceError, SolverError
from .fem import (
    ball_eigen,
    ball_eigenvalue,
    eigen_derivative_field,
    lambda1,
    second_variation,
)
from .mesh import BallMesh
from .shapes import RadialShape, ball, normalize, perimeter
from .spherical import ball_volume, bessel_first_zero, bessel_j, get_basis, sobolev_norm, sphere_area

FD_STEPS = (4e-2, 2e-2, 1e-2, 5e-3)
FUNCTIONALS = ("P", "lambda1", "J_c", "cap_inv")


def unit_volume_factor(dim: int) -> float:
    """omega_N^{-(N+1)/N}: converts a chart ratio P''/Lambda'' to a unit-volume threshold."""
    return ball_volume(dim) ** (-(dim + 1.0) / dim)


def c_star_formula(dim: int) -> float:
    """Sharp threshold N(N+1) p_N / (4 l_N (l_N - N) omega_N^{(N+1)/N})."""
    p = sphere_area(dim)
    ln = ball_eigenvalue(dim)
    return dim * (dim + 1) * p / (4.0 * ln * (ln - dim)) * unit_volume_factor(dim)


def payne_weinberger_constant() -> float:
    """Planar comparison constant 1 / (sqrt(pi) j^2 (J_1(j)^{-2} - 1)), j the first zero of J_0."""
    j = bessel_first_zero(0.0)
    j1 = float(bessel_j(1.0, j))
    return 1.0 / (math.sqrt(math.pi) * j * j * (j1**-2 - 1.0))


def richardson_second_difference(f, steps=FD_STEPS, rtol: float = 1e-4, atol: float = 1e-7) -> float:
    """Central second difference with one Richardson level over halving steps.

    Raises ConvergenceError when the two finest extrapolated values disagree
    beyond ``max(atol, rtol*|value|)``.
    """
    f0 = f(0.0)
    d = [(f(e) - 2.0 * f0 + f(-e)) / (e * e) for e in steps]
    rich = [(4.0 * d[i + 1] - d[i]) / 3.0 for i in range(len(d) - 1)]
    best = rich[-2] if len(rich) > 1 else rich[-1]
    if len(rich) > 1 and abs(rich[-1] - rich[-2]) > max(atol, rtol * abs(best)):
        raise ConvergenceError(f"Richardson values disagree: {rich}")
    return best


def _mode_direction(dim: int, l: int, l_max: int, m: int | None = None) -> RadialShape:
    b = get_basis(dim, l_max)
    return RadialShape(dim, b.mode_vector(l, m))


def perimeter_mode_value(l: int, dim: int, corrected: bool = True) -> float:
    """Closed form of P'' for a unit L2 harmonic of degree l.

    Along the corrected path the constant mode is normalised away entirely.
    """
    if corrected and l == 0:
        return 0.0
    raw = l * (l + dim - 2) + (dim - 1) * (dim - 2)
    return raw - (dim - 1) ** 2 if corrected else float(raw)


def perimeter_second_form(l: int, dim: int, corrected: bool = True, direction: RadialShape | None = None) -> float:
    """Richardson second difference of the perimeter along a (normalised) mode path."""
    if direction is None:
        direction = _mode_direction(dim, l, max(l, 2))
    c = direction.coeffs

    def f(t):
        s = direction.with_coeffs(t * c)
        return perimeter(normalize(s, "both") if corrected else s)

    return richardson_second_difference(f, atol=1e-8)


@dataclass(frozen=True)
class LambdaSecondForm:
    """Second derivative of lambda_1 along a mode path, three ways.

    ``boundary`` and ``volumetric`` are for the normalised path; ``raw_*``
    for t -> B_{tY} without normalisation. ``fd`` is the Richardson second
    difference of lambda1 along the normalised path (None if not computed).
    """

    l: int
    boundary: float
    volumetric: float
    raw_boundary: float
    raw_volumetric: float
    fd: float | None = None

    @property
    def value(self) -> float:
        return self.boundary


def lambda_second_form(l: int, dim: int, mesh: BallMesh, m: int | None = None, with_fd: bool = True, direction: RadialShape | None = None) -> LambdaSecondForm:
    """Boundary and volumetric evaluations of lambda_1'' at the ball for one direction.

    The normalised path is t -> normalize(B_{tY}, "unit_volume").
    """
    if direction is None:
        direction = _mode_direction(dim, l, max(l, 1), m)
    be = ball_eigen(mesh)
    sol = be.solution
    lam = sol.lam
    raw_b, raw_v = _raw_lambda_forms(direction, mesh)
    # normalisation removes the constant mode; the remaining path picks up
    # the second-order volume correction through lambda' of a dilation
    centred = np.array(direction.coeffs)
    centred[0] = 0.0
    norm2 = float(np.sum(centred**2))
    if norm2 == 0.0:
        corr_b = corr_v = 0.0
    else:
        cb, cv = (raw_b, raw_v) if direction.coeffs[0] == 0.0 else _raw_lambda_forms(direction.with_coeffs(centred), mesh)
        sigma = sphere_area(dim)
        flux_sq = float(be.flux @ (be.boundary_mass @ be.flux))
        corr_b = cb + (dim - 1) * norm2 * flux_sq / sigma
        corr_v = cv + 2.0 * (dim - 1) * lam * norm2 / sigma
    fd = None
    if with_fd:
        c = direction.coeffs

        def f(t):
            return lambda1(normalize(direction.with_coeffs(t * c), "unit_volume"), mesh, shift=lam).lam

        fd = richardson_second_difference(f, rtol=1e-3, atol=1e-5)
    form = LambdaSecondForm(l, corr_b, corr_v, raw_b, raw_v, fd)
    scale = max(abs(raw_v), 1.0)
    if abs(raw_b - raw_v) > 0.05 * scale:
        raise SolverError(f"boundary and volumetric second derivatives disagree at l={l}: {raw_b} vs {raw_v}")
    return form


def _raw_lambda_forms(direction: RadialShape, mesh: BallMesh) -> tuple[float, float]:
    """lambda'' along t -> B_{t h}: boundary formula and discrete second variation."""
    be = ball_eigen(mesh)
    sol = be.solution
    K, M, lam = sol.K, sol.M, sol.lam
    df = eigen_derivative_field(direction, mesh)
    vp, lift = df.vprime, df.boundary_values
    raw_b = 2.0 * float(vp @ (K @ vp) - lam * (vp @ (M @ vp))) + (direction.dim - 1) * float(lift @ (be.boundary_mass @ lift))
    raw_v = second_variation(sol, direction.coeffs, lu=be.bordered).second
    return raw_b, raw_v


@dataclass(frozen=True)
class ModeSpectrum:
    """Per-degree second derivatives on unit-H^1 directions and induced thresholds.

    ``thresholds[l]`` is the unit-volume threshold of degree l (NaN for l < 2
    or when the eigenvalue form is not positive).
    """

    dim: int
    degrees: np.ndarray
    perimeter: np.ndarray
    eigenvalue: np.ndarray
    eigenvalue_volumetric: np.ndarray
    eigenvalue_fd: np.ndarray
    thresholds: np.ndarray
    source: str = "fem"

    @property
    def c_star(self) -> float:
        return float(np.nanmin(self.thresholds[2:]))

    @property
    def argmin(self) -> int:
        return int(self.degrees[2:][np.nanargmin(self.thresholds[2:])])

    def rows(self) -> list[dict]:
        out = []
        for i, l in enumerate(self.degrees):
            out.append(
                {
                    "l": int(l),
                    "P2": float(self.perimeter[i]),
                    "L2": float(self.eigenvalue[i]),
                    "L2_volumetric": float(self.eigenvalue_volumetric[i]),
                    "L2_fd": float(self.eigenvalue_fd[i]),
                    "c_l": float(self.thresholds[i]),
                }
            )
        return out


def _thresholds(dim, degrees, P2, L2):
    c = np.full(len(degrees), np.nan)
    for i, l in enumerate(degrees):
        if l >= 2:
            if L2[i] <= 0:
                raise SolverError(f"eigenvalue form is not positive at l={l}")
            c[i] = unit_volume_factor(dim) * P2[i] / L2[i]
    return c


def mode_spectrum(dim: int, l_max: int, mesh: BallMesh, with_fd: bool = True) -> ModeSpectrum:
    """Finite element mode table for degrees 0..l_max (zonal / cosine directions)."""
    degrees = np.arange(l_max + 1)
    h1 = 1.0 + degrees * (degrees + dim - 2)
    P2 = np.empty(l_max + 1)
    L2 = np.empty(l_max + 1)
    Lv = np.empty(l_max + 1)
    Lf = np.full(l_max + 1, np.nan)
    for l in degrees:
        P2[l] = perimeter_second_form(int(l), dim)
        form = lambda_second_form(int(l), dim, mesh, with_fd=with_fd)
        L2[l], Lv[l] = form.boundary, form.volumetric
        if form.fd is not None:
            Lf[l] = form.fd
    P2, L2, Lv, Lf = P2 / h1, L2 / h1, Lv / h1, Lf / h1
    return ModeSpectrum(dim, degrees, P2, L2, Lv, Lf, _thresholds(dim, degrees, P2, L2), "fem")


def eigenvalue_mode_value(l: int, dim: int) -> float:
    """Closed form of Lambda'' (normalised path, unit L2 harmonic) from Bessel functions.

    With k^2 = lambda_1(B) and nu = l + N/2 - 1 the Dirichlet-to-Neumann ratio
    of the mode is l - k J_{nu+1}(k) / J_nu(k), and the boundary flux squared
    is 2 lambda / |S^{N-1}|. Degree 0 is removed by normalisation.
    """
    if l == 0:
        return 0.0
    k = bessel_first_zero(dim / 2.0 - 1.0)
    nu = l + dim / 2.0 - 1.0
    dtn = l - k * float(bessel_j(nu + 1.0, k)) / float(bessel_j(nu, k))
    flux_sq = 2.0 * k * k / sphere_area(dim)
    return flux_sq * (2.0 * dtn + 2.0 * (dim - 1))


def analytic_mode_spectrum(dim: int, l_max: int = 12) -> ModeSpectrum:
    degrees = np.arange(l_max + 1)
    h1 = 1.0 + degrees * (degrees + dim - 2)
    P2 = np.array([perimeter_mode_value(int(l), dim) for l in degrees]) / h1
    L2 = np.array([eigenvalue_mode_value(int(l), dim) for l in degrees]) / h1
    return ModeSpectrum(dim, degrees, P2, L2, L2.copy(), np.full(l_max + 1, np.nan), _thresholds(dim, degrees, P2, L2), "bessel")


def sharp_threshold(dim: int, spectrum: ModeSpectrum | None = None) -> tuple[float, float, int]:
    """(c* from the closed formula, min over l >= 2 of c_l, minimising degree)."""
    if spectrum is None:
        spectrum = analytic_mode_spectrum(dim)
    if spectrum.degrees[-1] < 2:
        raise ValueError("spectrum must contain degrees >= 2")
    return c_star_formula(dim), spectrum.c_star, spectrum.argmin


@dataclass(frozen=True)
class RemainderLadder:
    functional: str
    direction: np.ndarray = field(repr=False)
    eps: np.ndarray
    values: np.ndarray
    model: np.ndarray
    remainders: np.ndarray
    slope: float
    base_value: float
    first_derivative: float
    second_derivative: float
    noise_floor: float
    c: float | None = None

    @property
    def increments(self) -> np.ndarray:
        return self.values - self.base_value

    def rows(self) -> list[dict]:
        return [
            {"eps": float(e), "value": float(v), "model": float(m), "remainder": float(r), "increment": float(v - self.base_value)}
            for e, v, m, r in zip(self.eps, self.values, self.model, self.remainders)
        ]


def _strip_low_modes(direction: RadialShape) -> RadialShape:
    c = np.array(direction.coeffs)
    b = direction.basis
    c[b.degrees <= 1] = 0.0
    norm = sobolev_norm(c, 1.0, b)
    if norm == 0.0:
        raise ValueError("direction has no component of degree >= 2")
    return direction.with_coeffs(c / norm)


def fuglede_remainder(
    functional: str,
    direction: RadialShape,
    eps_grid,
    mesh: BallMesh | None = None,
    c: float | None = None,
) -> RemainderLadder:
    """F(normalize(B_{eps h})) minus its second-order Taylor model at the ball.

    The direction is stripped of degrees 0 and 1 (removed by normalisation)
    and rescaled to unit H^1 norm. For ``J_c`` the functional is evaluated on
    the unit-volume rescaling, J_c = r^{N-1} P - c lambda_1 / r^2. For
    ``cap_inv`` the capacity is the explicit competitor energy and the
    second derivative is a Richardson difference.
    """
    if functional not in FUNCTIONALS:
        raise ValueError(f"unknown functional {functional!r}")
    eps = np.asarray(sorted(eps_grid, reverse=True), dtype=float)
    if len(eps) < 4:
        raise ValueError("need at least 4 grid points for a slope fit")
    dim = direction.dim
    h = _strip_low_modes(direction)
    b = h.basis
    base = ball(dim, h.l_max)
    norm2 = float(np.sum(h.coeffs**2))
    sigma = sphere_area(dim)
    r = ball_volume(dim) ** (-1.0 / dim)
    needs_fem = functional in ("lambda1", "J_c")
    if needs_fem and mesh is None:
        raise ValueError(f"{functional} needs a mesh")
    if functional == "J_c" and c is None:
        raise ValueError("J_c needs c")

    P2 = float(np.sum(h.coeffs**2 * (b.eigenvalues - (dim - 1))))
    lam0 = L1 = L2 = 0.0
    if needs_fem:
        be = ball_eigen(mesh)
        lam0 = be.lam
        sv = second_variation(be.solution, h.coeffs, lu=be.bordered)
        # the discrete first derivative is not exactly zero on an unsymmetric mesh
        L1 = sv.first
        L2 = sv.second + 2.0 * (dim - 1) * lam0 * norm2 / sigma

    def shape_at(e):
        return normalize(h.with_coeffs(e * h.coeffs), "both")

    def evaluate(e):
        s = shape_at(e) if e != 0.0 else base
        if functional == "P":
            return perimeter(s)
        if functional == "lambda1":
            return lambda1(s, mesh, shift=lam0).lam
        if functional == "J_c":
            return r ** (dim - 1) * perimeter(s) - c * lambda1(s, mesh, shift=lam0).lam / r**2
        return 1.0 / competitor_energy(s).total

    F0 = evaluate(0.0)
    F1 = 0.0
    if functional == "P":
        F2 = P2
    elif functional == "lambda1":
        F1, F2 = L1, L2
    elif functional == "J_c":
        F1, F2 = -c * L1 / r**2, r ** (dim - 1) * P2 - c * L2 / r**2
    else:
        step = FD_STEPS[-1]
        F1 = (evaluate(step) - evaluate(-step)) / (2.0 * step)
        F2 = richardson_second_difference(evaluate, atol=1e-9)
    values = np.array([evaluate(e) for e in eps])
    model = F0 + eps * F1 + 0.5 * eps**2 * F2
    rem = values - model
    noise = 1e-12 * max(1.0, abs(F0)) * (100.0 if needs_fem else 1.0)
    mask = np.abs(rem) > noise
    if mask.sum() >= 2:
        slope = float(np.polyfit(np.log(eps[mask]), np.log(np.abs(rem[mask])), 1)[0])
    else:
        slope = float("inf")
    return RemainderLadder(functional, h.coeffs, eps, values, model, rem, slope, F0, F1, F2, noise, c)


def lambda_path_second_difference(direction: RadialShape, t: float, dt: float, mesh: BallMesh, shift: float | None = None) -> float:
    """(lambda(t+dt) - 2 lambda(t) + lambda(t-dt)) / dt^2 along t -> B_{t h}."""
    c = direction.coeffs

    def lam(s):
        return lambda1(direction.with_coeffs(s * c), mesh, shift=shift).lam

    return (lam(t + dt) - 2.0 * lam(t) + lam(t - dt)) / (dt * dt)


def ic_diagnostic(direction: RadialShape, t_grid, mesh: BallMesh, dt: float = 0.1) -> tuple[float, float]:
    """sup_t |lambda''(t) - lambda''(0)| along t -> B_{t h} and its ratio to |h|^2_{H^{1/2}}.

    Second derivatives are central differences with step ``dt``.
    """
    norm_half = sobolev_norm(direction.coeffs, 0.5, direction.basis) ** 2
    if norm_half == 0.0:
        return 0.0, 0.0
    lam0 = ball_eigen(mesh).lam
    d0 = lambda_path_second_difference(direction, 0.0, dt, mesh, lam0)
    sup = 0.0
    for t in t_grid:
        if t == 0.0:
            continue
        sup = max(sup, abs(lambda_path_second_difference(direction, float(t), dt, mesh, lam0) - d0))
    noise = 4.0 * 1e-13 * lam0 / dt**2
    if sup < noise:
        raise SolverError("second differences are below the solver noise level; increase dt")
    return sup, sup / norm_half


def perimeter_first_variation(direction: RadialShape) -> float:
    """dP(B_{th})/dt at t = 0, equal to (N-1) times the integral of h."""
    c0 = direction.coeffs[0]
    return (direction.dim - 1) * c0 * math.sqrt(sphere_area(direction.dim))


def lambda_first_variation(direction: RadialShape, mesh: BallMesh) -> float:
    """dlambda(B_{th})/dt at t = 0 from the boundary flux of the ball eigenfunction."""
    return eigen_derivative_field(direction, mesh).lam_prime
