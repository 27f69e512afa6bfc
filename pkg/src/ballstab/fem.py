"""P1 finite elements for the Dirichlet Laplacian on deformed balls.

Every body B_h is handled on the fixed unit-ball mesh through the map
x -> x + xi(x) with xi(x) = theta(|x|) h(x/|x|) x. The eigenproblem becomes
-div(A grad u) = lambda J u with J = det(I + D xi) and
A = J (I + D xi)^{-1} (I + D xi)^{-T}.
"""

from __future__ import annotations

import logging
import math
import weakref
from collections import OrderedDict
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import kernels
from .errors import ConvergenceError, DeformationError, NotStarShapedError, SolverError
from .mesh import BallMesh
from .shapes import RadialShape, constant_coefficient
from .spherical import bessel_first_zero, evaluate_basis, mode_list

log = logging.getLogger(__name__)

CUTOFF_START, CUTOFF_END = 0.3, 0.7


def cutoff(r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Quintic smoothstep: 0 below 0.3, 1 above 0.7; returns value and derivative."""
    width = CUTOFF_END - CUTOFF_START
    s = np.clip((np.asarray(r, dtype=float) - CUTOFF_START) / width, 0.0, 1.0)
    val = s**3 * (10.0 - 15.0 * s + 6.0 * s * s)
    der = 30.0 * s * s * (1.0 - s) ** 2 / width
    return val, der


def _mass_rule(dim: int):
    """Barycentric points and weights exact for quadratics on a simplex."""
    if dim == 2:
        phi = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
        return phi, np.full(3, 1.0 / 3.0)
    a, b = 0.5854101966249685, 0.1381966011250105
    phi = np.full((4, 4), b)
    np.fill_diagonal(phi, a)
    return phi, np.full(4, 0.25)


class _ElementPoints:
    """Centroids and mass-quadrature points of a mesh with cached harmonic tables."""

    max_cache_bytes = 400_000_000

    def __init__(self, mesh: BallMesh):
        self.dim = mesh.dim
        self.ne = mesh.n_simplices
        self.phi, self.wq = _mass_rule(mesh.dim)
        self.nq = len(self.wq)
        X = mesh.vertices[mesh.simplices]
        cent = X.mean(axis=1)
        qpts = np.einsum("qk,ekd->eqd", self.phi, X).reshape(-1, mesh.dim)
        self.points = np.concatenate([cent, qpts])
        self.r = np.linalg.norm(self.points, axis=1)
        self.omega = self.points / self.r[:, None]
        self.theta, self.dtheta = cutoff(self.r)
        self._tables: OrderedDict = OrderedDict()

    def table(self, modes) -> tuple[np.ndarray, np.ndarray]:
        """Stacked values (np, k) and Cartesian gradients (np, k, d) of harmonics."""
        missing = [m for m in modes if m not in self._tables]
        if missing:
            vals, grads = evaluate_basis(self.dim, missing, self.omega, derivs=1)
            for k, m in enumerate(missing):
                self._tables[m] = (np.ascontiguousarray(vals[:, k]), np.ascontiguousarray(grads[:, k, :]))
            per_mode = self.points.size * 8 * (1 + self.dim) // self.dim
            while len(self._tables) * per_mode > self.max_cache_bytes and len(self._tables) > len(modes):
                self._tables.popitem(last=False)
        for m in modes:
            self._tables.move_to_end(m)
        V = np.stack([self._tables[m][0] for m in modes], axis=1)
        G = np.stack([self._tables[m][1] for m in modes], axis=1)
        return V, G


_POINTS: "weakref.WeakKeyDictionary[BallMesh, _ElementPoints]" = weakref.WeakKeyDictionary()


def element_points(mesh: BallMesh) -> _ElementPoints:
    pts = _POINTS.get(mesh)
    if pts is None:
        pts = _ElementPoints(mesh)
        _POINTS[mesh] = pts
    return pts


def _active(dim: int, coeffs: np.ndarray):
    l_max = (len(coeffs) - 1) // 2 if dim == 2 else int(round(math.sqrt(len(coeffs)))) - 1
    modes = mode_list(dim, l_max)
    idx = np.flatnonzero(coeffs)
    return [modes[k] for k in idx], coeffs[idx]


def deformation_gradient(mesh: BallMesh, coeffs: np.ndarray) -> np.ndarray:
    """D xi at every element point (centroids first, then mass points)."""
    ep = element_points(mesh)
    d = mesh.dim
    modes, c = _active(d, np.asarray(coeffs, dtype=float))
    n = len(ep.r)
    if not modes:
        return np.zeros((n, d, d))
    V, G = ep.table(modes)
    h = V @ c
    gh = np.einsum("pkd,k->pd", G, c)
    D = (ep.theta * h)[:, None, None] * np.eye(d)
    D += (ep.dtheta * ep.r * h)[:, None, None] * ep.omega[:, :, None] * ep.omega[:, None, :]
    D += ep.theta[:, None, None] * ep.omega[:, :, None] * gh[:, None, :]
    return D


@dataclass(frozen=True, eq=False)
class PullbackCoefficients:
    """A at element centroids, J at centroids and at mass points."""

    A: np.ndarray
    J: np.ndarray
    Jq: np.ndarray
    F: np.ndarray = field(repr=False)
    Finv: np.ndarray = field(repr=False)
    Jall: np.ndarray = field(repr=False)
    max_condition: float = 1.0


def _coefficients_from_F(F: np.ndarray, ne: int, nq: int) -> PullbackCoefficients:
    J = np.linalg.det(F)
    if np.min(J) <= 0.0:
        raise DeformationError(f"pullback map folds over (min det = {np.min(J):.3e})")
    Finv = np.linalg.inv(F)
    Fc = Finv[:ne]
    A = J[:ne, None, None] * np.einsum("eij,ekj->eik", Fc, Fc)
    ev = np.linalg.eigvalsh(A)
    cond = float(np.max(ev[:, -1] / ev[:, 0]))
    log.debug("pullback conductivity condition number %.3g", cond)
    return PullbackCoefficients(
        A=np.ascontiguousarray(A),
        J=J[:ne],
        Jq=np.ascontiguousarray(J[ne:].reshape(ne, nq)),
        F=F,
        Finv=Finv,
        Jall=J,
        max_condition=cond,
    )


def pullback_coefficients(shape: RadialShape, mesh: BallMesh) -> PullbackCoefficients:
    """Coefficient fields of the pulled-back problem for the body B_h."""
    if shape.dim != mesh.dim:
        raise ValueError("shape and mesh dimensions differ")
    ep = element_points(mesh)
    F = np.eye(mesh.dim) + deformation_gradient(mesh, shape.coeffs)
    return _coefficients_from_F(F, ep.ne, ep.nq)


def _scatter(mesh: BallMesh, local: np.ndarray) -> sp.csr_matrix:
    indptr, indices, inverse, nnz = mesh.sparsity
    data = np.bincount(inverse, weights=local.ravel(), minlength=nnz)
    n = mesh.n_vertices
    return sp.csr_matrix((data, indices, indptr), shape=(n, n))


def assemble(mesh: BallMesh, A: np.ndarray, Jq: np.ndarray) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Global stiffness (conductivity A) and mass (weight Jq) matrices."""
    ep = element_points(mesh)
    Ke, Me = kernels.element_matrices(
        np.ascontiguousarray(mesh.barycentric_gradients),
        np.ascontiguousarray(mesh.volumes),
        np.ascontiguousarray(A),
        np.ascontiguousarray(Jq),
        np.ascontiguousarray(ep.phi),
        np.ascontiguousarray(ep.wq),
    )
    return _scatter(mesh, Ke), _scatter(mesh, Me)


def ball_eigenvalue(dim: int) -> float:
    """lambda_1 of the unit ball, j^2 for the first zero j of J_{N/2-1}."""
    return bessel_first_zero(dim / 2.0 - 1.0) ** 2


@dataclass(frozen=True, eq=False)
class EigenSolution:
    """Smallest eigenpair of the pulled-back problem.

    ``lam`` is the eigenvalue of the physical body. ``v`` is normalised by
    v^T M_J v = 1 in the chart where the mean dilation ``scale`` has been
    factored out (see :func:`lambda1`).
    """

    lam: float
    v: np.ndarray
    residual: float
    iterations: int
    scale: float = 1.0
    chart_coeffs: np.ndarray | None = field(default=None, repr=False)
    K: sp.csr_matrix | None = field(default=None, repr=False)
    M: sp.csr_matrix | None = field(default=None, repr=False)
    coefficients: PullbackCoefficients | None = field(default=None, repr=False)
    mesh: BallMesh | None = field(default=None, repr=False)

    @property
    def chart_lam(self) -> float:
        return self.lam * self.scale**2


def _inverse_iteration(K, M, sigma, tol, max_iter):
    lu = splu((K - sigma * M).tocsc())
    x = np.ones(K.shape[0])
    x /= math.sqrt(x @ (M @ x))
    lam_old = np.inf
    for it in range(1, max_iter + 1):
        y = lu.solve(M @ x)
        My = M @ y
        y /= math.sqrt(y @ My)
        My = M @ y
        Ky = K @ y
        lam = float(y @ Ky)
        res = float(np.linalg.norm(Ky - lam * My) / np.linalg.norm(y))
        x = y
        if res < tol and abs(lam - lam_old) <= tol * abs(lam):
            return lam, x, res, it
        lam_old = lam
    raise ConvergenceError(f"inverse iteration stalled after {max_iter} steps (residual {res:.2e})")


def chart_split(shape: RadialShape) -> tuple[float, np.ndarray]:
    """Split rho = s (1 + g) with g free of the constant mode."""
    y0 = 1.0 / constant_coefficient(shape.dim)
    s = 1.0 + shape.coeffs[0] * y0
    if s <= 0.0:
        raise NotStarShapedError("mean radius is not positive")
    g = np.array(shape.coeffs) / s
    g[0] = 0.0
    return s, g


def solve_chart(mesh: BallMesh, g: np.ndarray, shift: float | None = None, tol: float = 1e-10, max_iter: int = 500):
    """Eigenpair of the pullback with coefficients ``g`` (no dilation factoring)."""
    ep = element_points(mesh)
    coef = _coefficients_from_F(np.eye(mesh.dim) + deformation_gradient(mesh, g), ep.ne, ep.nq)
    K, M = assemble(mesh, coef.A, coef.Jq)
    I = mesh.interior
    Kii = K[I][:, I]
    Mii = M[I][:, I]
    guess = ball_eigenvalue(mesh.dim) if shift is None else shift
    for sigma in (0.9 * guess, 0.0):
        lam, x, res, it = _inverse_iteration(Kii, Mii, sigma, tol, max_iter)
        if x.sum() < 0:
            x = -x
        if np.min(x) >= -1e-8 * np.max(x):
            break
        log.info("shift %.4g converged to an excited state; retrying from zero", sigma)
    else:
        raise SolverError("no sign-definite ground state found")
    if lam <= 0.0:
        raise SolverError("stiffness matrix is not positive definite")
    v = np.zeros(mesh.n_vertices)
    v[I] = x
    return lam, v, res, it, K, M, coef


def lambda1(shape: RadialShape, mesh: BallMesh, shift: float | None = None, tol: float = 1e-10, max_iter: int = 500) -> EigenSolution:
    """First Dirichlet eigenvalue of B_h by shifted inverse iteration.

    The mean dilation s (constant mode of h) is factored out exactly:
    lambda(B_h) = lambda(B_g) / s^2 with rho = s (1 + g). ``shift`` is an
    estimate of the eigenvalue (e.g. from a nearby shape); the iteration
    shifts by 0.9 times it.
    """
    if shape.dim != mesh.dim:
        raise ValueError("shape and mesh dimensions differ")
    s, g = chart_split(shape)
    chart_shift = None if shift is None else shift * s * s
    lam, v, res, it, K, M, coef = solve_chart(mesh, g, chart_shift, tol, max_iter)
    return EigenSolution(lam / (s * s), v, res, it, s, g, K, M, coef, mesh)


def element_gradients(mesh: BallMesh, v: np.ndarray) -> np.ndarray:
    return np.einsum("eid,ei->ed", mesh.barycentric_gradients, v[mesh.simplices])


def _mass_point_values(mesh: BallMesh, v: np.ndarray) -> np.ndarray:
    ep = element_points(mesh)
    return np.einsum("qi,ei->eq", ep.phi, v[mesh.simplices])


def chart_gradient(sol: EigenSolution, l_max: int) -> np.ndarray:
    """d(chart eigenvalue)/d(g coefficients) for every harmonic up to l_max.

    Exact derivative of the discrete eigenvalue: a'(v,v) - lambda m'(v,v).
    """
    mesh = sol.mesh
    ep = element_points(mesh)
    ne = ep.ne
    d = mesh.dim
    coef = sol.coefficients
    lam = sol.chart_lam
    modes = mode_list(d, l_max)
    V, G = ep.table(modes)
    Finv, J = coef.Finv, coef.Jall
    om, th, dth, r = ep.omega, ep.theta, ep.dtheta, ep.r
    tr_finv = np.trace(Finv, axis1=1, axis2=2)
    finv_om = np.einsum("pij,pj->pi", Finv, om)
    om_finv_om = np.einsum("pi,pi->p", om, finv_om)
    # stiffness part at centroids
    gv = element_gradients(mesh, sol.v)
    w = np.einsum("eji,ej->ei", Finv[:ne], gv)
    z = np.einsum("eij,ej->ei", Finv[:ne], w)
    ww = np.einsum("ei,ei->e", w, w)
    wz = np.einsum("ei,ei->e", w, z)
    wo = np.einsum("ei,ei->e", w, om[:ne])
    oz = np.einsum("ei,ei->e", om[:ne], z)
    wgt = mesh.volumes * J[:ne]
    alpha = wgt * ((th[:ne] * tr_finv[:ne] + dth[:ne] * r[:ne] * om_finv_om[:ne]) * ww - 2.0 * (th[:ne] * wz + dth[:ne] * r[:ne] * wo * oz))
    beta = (wgt * th[:ne])[:, None] * (ww[:, None] * finv_om[:ne] - 2.0 * wo[:, None] * z)
    a_prime = V[:ne].T @ alpha + np.einsum("ekd,ed->k", G[:ne], beta)
    # mass part at quadrature points
    vq = _mass_point_values(mesh, sol.v).ravel()
    qw = (mesh.volumes[:, None] * ep.wq[None, :]).ravel() * J[ne:] * vq * vq
    alpha_m = qw * (th[ne:] * tr_finv[ne:] + dth[ne:] * r[ne:] * om_finv_om[ne:])
    beta_m = (qw * th[ne:])[:, None] * finv_om[ne:]
    m_prime = V[ne:].T @ alpha_m + np.einsum("pkd,pd->k", G[ne:], beta_m)
    return a_prime - lam * m_prime


def lambda_gradient(shape: RadialShape, sol: EigenSolution) -> np.ndarray:
    """Gradient of lambda_1(B_h) with respect to the coefficients of h."""
    s = sol.scale
    y0 = 1.0 / constant_coefficient(shape.dim)
    G = chart_gradient(sol, shape.l_max)
    G[0] = 0.0
    lam_c = sol.chart_lam
    out = G / s**3
    h = np.array(shape.coeffs)
    h[0] = 0.0
    out[0] = -y0 / s**4 * float(G @ h) - 2.0 * y0 * lam_c / s**3
    return out


def _bordered_lu(A: sp.spmatrix, m: np.ndarray):
    n = A.shape[0]
    B = sp.bmat([[A, sp.csr_matrix(m.reshape(-1, 1))], [sp.csr_matrix(m.reshape(1, -1)), None]], format="csc")
    try:
        return splu(B)
    except RuntimeError as exc:
        raise SolverError(f"bordered system is singular; eigenvalue may be multiple ({exc})") from exc


@dataclass(frozen=True, eq=False)
class SecondVariation:
    lam: float
    first: float
    second: float
    udot: np.ndarray = field(repr=False)


def second_variation(sol: EigenSolution, direction: np.ndarray, lu=None) -> SecondVariation:
    """First and second derivative of the discrete chart eigenvalue along g + t*direction.

    The stiffness and mass matrices are differentiated through the pullback
    coefficients, so the result is the exact derivative of the discrete
    eigenvalue (material-derivative form, valid for any admissible base).
    """
    mesh = sol.mesh
    ep = element_points(mesh)
    ne, nq, d = ep.ne, ep.nq, mesh.dim
    coef = sol.coefficients
    lam = sol.chart_lam
    v = sol.v
    E = deformation_gradient(mesh, direction)
    Finv = coef.Finv
    J = coef.Jall
    X = Finv @ E
    trX = np.trace(X, axis1=1, axis2=2)
    X2 = X @ X
    J1 = J * trX
    J2 = J * (trX**2 - np.trace(X2, axis1=1, axis2=2))
    Fc = Finv[:ne]
    C = Fc @ np.transpose(Fc, (0, 2, 1))
    Xc = X[:ne]
    XC = Xc @ C
    sym1 = XC + np.transpose(XC, (0, 2, 1))
    XT = np.transpose(Xc, (0, 2, 1))
    quad = Xc @ XC + Xc @ C @ XT + C @ XT @ XT
    A1 = J1[:ne, None, None] * C - J[:ne, None, None] * sym1
    A2 = J2[:ne, None, None] * C - 2.0 * J1[:ne, None, None] * sym1 + 2.0 * J[:ne, None, None] * quad
    K1, M1 = assemble(mesh, A1, J1[ne:].reshape(ne, nq))
    gv = element_gradients(mesh, v)
    k2 = float(np.einsum("e,ei,eij,ej->", mesh.volumes, gv, A2, gv))
    vq = _mass_point_values(mesh, v)
    m2 = float(np.einsum("e,q,eq,eq->", mesh.volumes, ep.wq, J2[ne:].reshape(ne, nq), vq * vq))
    K, M = sol.K, sol.M
    Mv = M @ v
    k1 = float(v @ (K1 @ v))
    m1 = float(v @ (M1 @ v))
    lam1 = k1 - lam * m1
    I = mesh.interior
    rhs = -(K1 @ v - lam * (M1 @ v) - lam1 * Mv)[I]
    if lu is None:
        lu = _bordered_lu((K - lam * M)[I][:, I], Mv[I])
    sol_b = lu.solve(np.append(rhs, 0.0))
    udot = np.zeros(mesh.n_vertices)
    udot[I] = sol_b[:-1]
    energy = float(udot @ (K @ udot) - lam * udot @ (M @ udot))
    lam2 = k2 - lam * m2 - 2.0 * lam1 * m1 - 2.0 * energy
    return SecondVariation(lam, lam1, lam2, udot)


def boundary_mass(mesh: BallMesh) -> sp.csr_matrix:
    """Consistent P1 mass matrix of the boundary sphere (full vertex indexing)."""
    facets = mesh.boundary_facets
    X = mesh.vertices[facets]
    k = facets.shape[1]
    if mesh.dim == 2:
        meas = np.linalg.norm(X[:, 1] - X[:, 0], axis=1)
    else:
        meas = 0.5 * np.linalg.norm(np.cross(X[:, 1] - X[:, 0], X[:, 2] - X[:, 0]), axis=1)
    local = (np.ones((k, k)) + np.eye(k)) / (k * (k + 1))
    rows = np.repeat(facets, k, axis=1).ravel()
    cols = np.tile(facets, (1, k)).ravel()
    data = (meas[:, None, None] * local[None]).ravel()
    n = mesh.n_vertices
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


@dataclass(frozen=True, eq=False)
class BallEigen:
    """Eigenpair of the undeformed ball with its boundary flux and a factored bordered system."""

    mesh: BallMesh
    solution: EigenSolution
    boundary_mass: sp.csr_matrix = field(repr=False)
    flux: np.ndarray = field(repr=False)
    bordered: object = field(repr=False)

    @property
    def lam(self) -> float:
        return self.solution.lam


_BALL: "weakref.WeakKeyDictionary[BallMesh, BallEigen]" = weakref.WeakKeyDictionary()


def ball_eigen(mesh: BallMesh) -> BallEigen:
    """Cached eigen data of the unit ball on ``mesh``."""
    cached = _BALL.get(mesh)
    if cached is not None:
        return cached
    from .shapes import ball

    sol = lambda1(ball(mesh.dim, 0), mesh)
    K, M, v, lam = sol.K, sol.M, sol.v, sol.lam
    B = mesh.boundary_nodes
    Mb = boundary_mass(mesh)
    r = (K @ v - lam * (M @ v))[B]
    q_b = splu(Mb[B][:, B].tocsc()).solve(r)
    flux = np.zeros(mesh.n_vertices)
    flux[B] = q_b
    I = mesh.interior
    lu = _bordered_lu((K - lam * M)[I][:, I], (M @ v)[I])
    out = BallEigen(mesh, sol, Mb, flux, lu)
    _BALL[mesh] = out
    return out


@dataclass(frozen=True, eq=False)
class DerivativeField:
    """Shape derivative v' of the ball eigenfunction for a normal velocity h."""

    vprime: np.ndarray
    lam_prime: float
    boundary_values: np.ndarray
    residual: float


def boundary_direction_values(mesh: BallMesh, direction: RadialShape) -> np.ndarray:
    """h at the boundary vertices (zero elsewhere)."""
    out = np.zeros(mesh.n_vertices)
    B = mesh.boundary_nodes
    out[B] = direction.radius(mesh.vertices[B]) - 1.0
    return out


def eigen_derivative_field(direction: RadialShape, mesh: BallMesh) -> DerivativeField:
    """Solve -Lap v' = lambda v' + lambda' v in B, v' = -(d_n v) h on the sphere, v' orthogonal to v."""
    be = ball_eigen(mesh)
    sol = be.solution
    K, M, v, lam = sol.K, sol.M, sol.v, sol.lam
    I, B = mesh.interior, mesh.boundary_nodes
    h = boundary_direction_values(mesh, direction)
    lift = -be.flux * h
    S = (K - lam * M).tocsr()
    r = (S @ v)[B]
    lam1 = float(r @ lift[B])
    Mv = M @ v
    rhs = lam1 * Mv[I] - (S[I][:, B] @ lift[B])
    ext = be.bordered.solve(np.append(rhs, -float(Mv[B] @ lift[B])))
    vp = lift.copy()
    vp[I] = ext[:-1]
    resid = S[I] @ vp - lam1 * Mv[I]
    scale = max(np.linalg.norm(rhs), 1e-300)
    residual = float(np.linalg.norm(resid) / scale)
    if residual > 1e-8:
        raise SolverError(f"derivative field residual {residual:.2e} exceeds 1e-8")
    return DerivativeField(vp, lam1, lift, residual)


def lambda1_path(shape: RadialShape, t_grid, mesh: BallMesh, check_convergence: bool = False):
    """lambda_1(B_{t h}) along the path; optional coarse-mesh monotonicity flag per point.

    Returns a list of (t, lambda, flag) with flag None unless requested. The
    flag is True when the value on ``mesh`` does not exceed the value on a
    mesh twice as coarse (conforming elements approximate from above).
    """
    from .mesh import build_mesh

    coarse = build_mesh(mesh.dim, min(0.9, 2.0 * mesh.size)) if check_convergence else None
    out = []
    prev = None
    for t in t_grid:
        s_t = shape.with_coeffs(t * shape.coeffs)
        sol = lambda1(s_t, mesh, shift=prev)
        prev = sol.lam
        flag = None
        if coarse is not None:
            flag = bool(sol.lam <= lambda1(s_t, coarse).lam + 1e-12)
        out.append((float(t), sol.lam, flag))
    return out


@lru_cache(maxsize=8)
def _ball_mesh_cached(dim: int, size: float) -> BallMesh:
    from .mesh import build_mesh

    return build_mesh(dim, size)


def cached_mesh(dim: int, size: float) -> BallMesh:
    """Shared mesh instance per (dim, size) so cached tables are reused."""
    return _ball_mesh_cached(dim, float(size))
