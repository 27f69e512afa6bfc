"""Convex-constrained minimisation, quasi-minimality checks and diagram sampling (planar).

All shapes are kept at |K| = |B| (unit-ball chart); reported functionals are
rescaled to unit volume, J_c(K) = r P(K) - c lambda_1(K) / r^2 with r the
radius of the unit-volume disk.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .errors import AdmissibilityError, BallstabError, ConvergenceError, DeformationError, NotStarShapedError
from .fem import cached_mesh, lambda1, lambda_gradient
from .shapes import (
    RadialShape,
    _dense_tables,
    ball,
    convexity_check,
    hausdorff_distance,
    normalize,
    perimeter,
    perimeter_gradient,
    random_shape,
    shape_from_modes,
    symmetric_difference,
    volume,
    volume_gradient,
    write_shape,
)
from .spherical import ball_volume, get_basis
from .stability import c_star_formula, eigenvalue_mode_value, perimeter_mode_value

EXPERIMENT_KINDS = ("optimize", "qmpcc", "diagram", "fuglede", "capacity", "threshold", "eval")
SUMMARY_HEADER = "#summary v1"
CONFIG_VERSION = 1


@dataclass
class ExperimentConfig:
    """Inputs of one experiment; ``validate`` checks ranges before a run."""

    kind: str = "optimize"
    dim: int = 2
    c: float = 0.0
    eps_cap: float = 0.0
    mu: float = 0.0
    target_asymmetry: float | None = 0.0
    box_scale: float = 2.0
    seed: int | None = None
    mesh_size: float = 0.05
    l_max: int = 8
    start: str = "random"
    start_amplitude: float = 0.05
    noise: float = 0.0
    step: float = 1.0
    max_iter: int = 150
    tol: float = 1e-10
    convexity_weight: float = 1e3
    convexity_margin: float = 1e-2
    huber_width: float = 1e-4
    n_samples: int = 2000
    band: float = 0.05
    n_competitors: int = 200
    qm_lambda: float | None = None
    qm_eps: float = 0.05
    workers: int = 1
    shape: str | None = None
    functionals: str = "P,lambda1"
    functional: str = "J_c"
    mode: int = 2
    eps_grid: list | None = None
    n_points: list | None = None
    fem: bool = False
    corpus: int = 0

    RANDOMIZED = ("optimize", "qmpcc", "diagram")

    @property
    def randomized(self) -> bool:
        return self.kind in self.RANDOMIZED or (self.kind == "capacity" and self.corpus > 0)

    def validate(self) -> "ExperimentConfig":
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if self.kind in ("optimize", "qmpcc", "diagram") and self.dim != 2:
            raise ValueError(f"{self.kind} runs are planar (dim = 2)")
        if self.randomized and self.seed is None:
            raise ValueError(f"{self.kind} is randomized and needs a seed")
        checks = [
            (self.c >= 0.0, "c must be nonnegative"),
            (self.eps_cap >= 0.0, "eps_cap must be nonnegative"),
            (self.mu >= 0.0, "mu must be nonnegative"),
            (self.target_asymmetry is None or self.target_asymmetry >= 0.0, "target_asymmetry must be nonnegative"),
            (1.0 < self.box_scale <= 10.0, "box_scale must lie in (1, 10]"),
            (0.005 <= self.mesh_size <= 0.5, "mesh_size must lie in [0.005, 0.5]"),
            (2 <= self.l_max <= 64, "l_max must lie in [2, 64]"),
            (self.start in ("random", "mode2", "ball"), "start must be random, mode2 or ball"),
            (0.0 <= self.start_amplitude <= 0.5, "start_amplitude must lie in [0, 0.5]"),
            (self.noise >= 0.0, "noise must be nonnegative"),
            (self.step > 0.0, "step must be positive"),
            (self.max_iter >= 1, "max_iter must be positive"),
            (self.tol > 0.0, "tol must be positive"),
            (self.convexity_weight >= 0.0, "convexity_weight must be nonnegative"),
            (self.huber_width > 0.0, "huber_width must be positive"),
            (self.band > 0.0, "band must be positive"),
            (self.n_competitors >= 1, "n_competitors must be positive"),
            (self.qm_eps > 0.0, "qm_eps must be positive"),
            (self.workers >= 1, "workers must be positive"),
            (self.mode >= 2, "mode must be at least 2"),
            (self.corpus >= 0, "corpus must be nonnegative"),
            (self.eps_grid is None or (len(self.eps_grid) >= 4 and min(self.eps_grid) > 0), "eps_grid needs >= 4 positive values"),
            (self.n_points is None or min(self.n_points) >= 12, "n_points entries must be >= 12"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)
        return self

    def to_dict(self) -> dict:
        return {"version": CONFIG_VERSION, **dataclasses.asdict(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        version = data.pop("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ValueError(f"unsupported config version {version}")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class ExperimentRecord:
    config: dict
    trace: list = field(default_factory=list)
    shape: RadialShape | None = None
    shape_file: str | None = None
    wall_clock: float = 0.0
    flags: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


# ---------------------------------------------------------------- objective


def _unit_radius(dim: int) -> float:
    return ball_volume(dim) ** (-1.0 / dim)


def huber(x: float, width: float) -> tuple[float, float]:
    """Huber smoothing of |x| and its derivative."""
    if abs(x) <= width:
        return 0.5 * x * x / width, x / width
    return abs(x) - 0.5 * width, math.copysign(1.0, x)


def asymmetry(shape: RadialShape) -> tuple[float, np.ndarray]:
    """Quadrature value of |K sym-diff B| and its coefficient gradient."""
    b = shape.basis
    w = b.quadrature.weights
    rho = shape.rho()
    N = shape.dim
    sgn = np.sign(rho**N - 1.0)
    val = float(w @ np.abs(rho**N - 1.0)) / N
    return val, b.values.T @ (w * sgn * rho ** (N - 1))


def convexity_penalty(shape: RadialShape, margin: float) -> tuple[float, np.ndarray, float]:
    """Quadratic hinge on the planar curvature proxy; returns (value, gradient, min proxy)."""
    quad, v, d1, d2 = _dense_tables(2, shape.l_max)
    c = shape.coeffs
    rho, r1, r2 = 1.0 + v @ c, d1 @ c, d2 @ c
    proxy = rho**2 + 2.0 * r1**2 - rho * r2
    gap = np.maximum(margin - proxy, 0.0)
    w = quad.weights
    val = float(w @ gap**2)
    dproxy = (2.0 * rho - r2)[:, None] * v + 4.0 * r1[:, None] * d1 - rho[:, None] * d2
    grad = -2.0 * dproxy.T @ (w * gap)
    return val, grad, float(proxy.min())


def _mode_curvature(l_max: int, c: float) -> np.ndarray:
    """Second derivative of the unit-volume J_c at the disk per degree (unit L2 modes)."""
    r = _unit_radius(2)
    out = np.zeros(l_max + 1)
    for l in range(2, l_max + 1):
        out[l] = r * perimeter_mode_value(l, 2) - c * eigenvalue_mode_value(l, 2) / r**2
    return out


class PenalizedObjective:
    """J_c at unit volume plus the smoothed asymmetry and convexity penalties."""

    def __init__(self, config: ExperimentConfig, target: float):
        self.cfg = config
        self.target = target
        self.mesh = cached_mesh(2, config.mesh_size)
        self.r = _unit_radius(2)
        self.shift = None
        self.evaluations = 0

    def jc(self, shape: RadialShape, with_grad: bool = True):
        c = self.cfg.c
        P = perimeter(shape)
        J = self.r * P
        g = self.r * perimeter_gradient(shape) if with_grad else None
        lam = float("nan")
        if c != 0.0:
            sol = lambda1(shape, self.mesh, shift=self.shift)
            self.shift = sol.lam
            lam = sol.lam
            J -= c * lam / self.r**2
            if with_grad:
                g = g - c * lambda_gradient(shape, sol) / self.r**2
        return J, g, P, lam

    def __call__(self, shape: RadialShape, with_grad: bool = True):
        self.evaluations += 1
        cfg = self.cfg
        J, g, P, lam = self.jc(shape, with_grad)
        A, gA = asymmetry(shape)
        hv, hd = huber(A - self.target, cfg.huber_width)
        cv, cg, pmin = convexity_penalty(shape, cfg.convexity_margin)
        total = J + cfg.mu * hv + cfg.convexity_weight * cv
        grad = None
        if with_grad:
            grad = g + cfg.mu * hd * gA + cfg.convexity_weight * cg
        info = {"J_c": J, "P": P, "lambda1": lam, "asymmetry": A, "convexity_penalty": cv, "min_curvature_proxy": pmin}
        return total, grad, info


def _clip_box(shape: RadialShape, box: float) -> RadialShape:
    rmax = 1.0 + float(np.max(_dense_tables(2, shape.l_max)[1] @ shape.coeffs))
    if rmax <= box:
        return shape
    return shape.dilated(box / rmax)


def _start_shape(cfg: ExperimentConfig, rng: np.random.Generator) -> RadialShape:
    if cfg.start == "ball":
        base = ball(2, cfg.l_max)
    elif cfg.start == "mode2":
        base = normalize(shape_from_modes(2, cfg.l_max, {(2, 2): cfg.start_amplitude}))
    else:
        amp = cfg.start_amplitude
        for _ in range(40):
            base = random_shape(rng, 2, cfg.l_max, amp)
            if convexity_check(base).is_convex and symmetric_difference(base, ball(2, cfg.l_max)) <= 0.1:
                break
            amp *= 0.8
        else:
            raise AdmissibilityError("could not draw a convex start")
    if cfg.noise > 0.0:
        b = get_basis(2, cfg.l_max)
        sd = np.where(b.degrees >= 2, (1.0 + b.degrees) ** -2.0, 0.0)
        base = normalize(base.with_coeffs(base.coeffs + cfg.noise * rng.standard_normal(b.size) * sd))
    return base


def feasible_shrink(shape: RadialShape, tol: float = 1e-9) -> tuple[RadialShape, float]:
    """Largest t in [0, 1] with normalize(B_{t h}) convex (bisection); returns (shape, t)."""
    if convexity_check(shape, tol).is_convex:
        return shape, 1.0

    def at(t):
        return normalize(shape.with_coeffs(t * shape.coeffs))

    lo, hi = 0.0, 1.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if convexity_check(at(mid), tol).is_convex:
            lo = mid
        else:
            hi = mid
    return at(lo), lo


def penalized_minimize(config: ExperimentConfig) -> ExperimentRecord:
    """Preconditioned projected gradient on J_c + mu * huber(|K sym-diff B| - a) + convexity hinge.

    Each trial point is re-normalised to |K| = |B| with zero barycenter and
    clipped to rho <= box_scale. Directions are scaled per degree by the
    absolute second derivative of J_c at the disk (floored), so the first
    step is close to a Newton step near the ball. After the loop, a final
    bisection toward the disk restores exact convexity if the hinge left a
    small violation.
    """
    cfg = config.validate()
    if cfg.kind != "optimize":
        raise ValueError("penalized_minimize needs kind='optimize'")
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    shape = _start_shape(cfg, rng)
    target = cfg.target_asymmetry if cfg.target_asymmetry is not None else asymmetry(shape)[0]
    obj = PenalizedObjective(cfg, target)
    b = get_basis(2, cfg.l_max)
    curv = _mode_curvature(cfg.l_max, cfg.c)
    floor = 0.2 * _unit_radius(2) * np.array([perimeter_mode_value(l, 2) for l in range(cfg.l_max + 1)])
    precond = np.maximum(np.abs(curv), floor)[b.degrees]
    precond[b.degrees <= 1] = np.inf

    f, g, info = obj(shape)
    base_J = obj.jc(ball(2, cfg.l_max), with_grad=False)[0]
    trace = [{"iteration": 0, "objective": f, "step": 0.0, **info}]
    converged = False
    last_step = cfg.step
    for it in range(1, cfg.max_iter + 1):
        # reduced gradient: the constant mode is slaved to the volume constraint
        vg = volume_gradient(shape)
        d = -(g - g[0] * vg / vg[0]) / precond
        d[0] = -float(vg[1:] @ d[1:]) / vg[0]
        slope = float(g @ d)
        if slope > -1e-16:
            converged = True
            break
        t = min(cfg.step, 2.0 * last_step)
        while True:
            try:
                trial = _clip_box(normalize(shape.with_coeffs(shape.coeffs + t * d)), cfg.box_scale)
                ft, gt, it_info = obj(trial)
            except (DeformationError, NotStarShapedError, ConvergenceError):
                ft = math.inf
            if ft <= f + 1e-4 * t * slope or t < 1e-8:
                break
            t *= 0.5
        last_step = t
        if not ft <= f:
            converged = True
            break
        shape, df, f, g, info = trial, f - ft, ft, gt, it_info
        trace.append({"iteration": it, "objective": f, "step": t, **info})
        if df <= cfg.tol * max(1.0, abs(f)):
            converged = True
            break
    shape, shrink = feasible_shrink(shape)
    final_f, _, final_info = obj(shape, with_grad=False)
    ref = ball(2, cfg.l_max)
    report = convexity_check(shape)
    vol_err = abs(volume(shape) / math.pi - 1.0)
    flags = {
        "converged": converged,
        "convex": bool(report.is_convex),
        "unit_volume": bool(vol_err <= 1e-8),
        "shrink_factor": shrink,
    }
    summary = {
        "objective": final_f,
        "J_c": final_info["J_c"],
        "J_c_ball": base_J,
        "J_c_gap": final_info["J_c"] - base_J,
        "perimeter": final_info["P"] * _unit_radius(2),
        "lambda1": final_info["lambda1"] * _unit_radius(2) ** -2,
        "asymmetry": symmetric_difference(shape, ref),
        "hausdorff": hausdorff_distance(shape, ref),
        "min_curvature_proxy": report.min_curvature_proxy,
        "volume_error": vol_err,
        "iterations": len(trace) - 1,
        "evaluations": obj.evaluations,
        "target_asymmetry": target,
    }
    return ExperimentRecord(cfg.to_dict(), trace, shape, None, time.perf_counter() - t0, flags, summary)


# ---------------------------------------------------------------- quasi-minimality


def _polygon(shape: RadialShape, n: int = 4096) -> np.ndarray:
    t = 2.0 * np.pi * np.arange(n) / n
    dirs = np.column_stack([np.cos(t), np.sin(t)])
    return shape.radius(dirs)[:, None] * dirs


def polygon_area(p: np.ndarray) -> float:
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def polygon_perimeter(p: np.ndarray) -> float:
    return float(np.sum(np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1)))


def polygon_is_convex(p: np.ndarray, tol: float = 1e-12) -> bool:
    e = np.roll(p, -1, axis=0) - p
    cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
    return bool(np.all(cross >= -tol))


def clip_halfplane(p: np.ndarray, u: np.ndarray, s: float) -> np.ndarray:
    """Intersection of a counter-clockwise polygon with {x : x.u <= s}."""
    d = p @ u - s
    q = np.roll(p, -1, axis=0)
    dq = np.roll(d, -1)
    keep = d <= 0.0
    cross = (d < 0.0) != (dq < 0.0)
    cross &= (d != 0.0) & (dq != 0.0)
    a = np.where(cross, d / np.where(cross, d - dq, 1.0), 0.0)
    hit = p + a[:, None] * (q - p)
    # each vertex contributes itself (if kept) followed by its edge crossing (if any)
    both = np.stack([p, hit], axis=1).reshape(-1, 2)
    mask = np.stack([keep, cross], axis=1).ravel()
    return both[mask]


@dataclass(frozen=True)
class QmpccVerdict:
    passed: bool
    max_ratio: float
    Lambda: float
    ratios: np.ndarray = field(repr=False)
    removed: np.ndarray = field(repr=False)
    kinds: tuple = field(repr=False)

    def rows(self) -> list[dict]:
        return [
            {"competitor": i, "kind": k, "removed": float(v), "ratio": float(r)}
            for i, (k, v, r) in enumerate(zip(self.kinds, self.removed, self.ratios))
        ]


def inner_competitors(shape: RadialShape, eps: float, n: int, rng: np.random.Generator, n_poly: int = 4096):
    """Yield (kind, removed area, perimeter) for shrinkages and cap cuts of K.

    Removed areas are uniform in (0, eps]. Perimeters and areas are those of
    the inscribed polygon, so P(K) must be taken from the same polygon.
    """
    poly = _polygon(shape, n_poly)
    area = polygon_area(poly)
    for i in range(n):
        v = eps * (1.0 - rng.random())
        if i % 2 == 0:
            t = math.sqrt(max(0.0, 1.0 - v / area))
            comp = t * poly
            kind = "shrink"
        else:
            phi = 2.0 * math.pi * rng.random()
            u = np.array([math.cos(phi), math.sin(phi)])
            hi = float(np.max(poly @ u))
            lo = hi - 1.0
            while area - polygon_area(clip_halfplane(poly, u, lo)) < v:
                lo -= 1.0
            s = brentq(lambda s: area - polygon_area(clip_halfplane(poly, u, s)) - v, lo, hi, xtol=1e-14)
            comp = clip_halfplane(poly, u, s)
            kind = "cut"
        if not polygon_is_convex(comp, 1e-10) or np.any(np.linalg.norm(comp, axis=1) > np.max(np.linalg.norm(poly, axis=1)) + 1e-12):
            raise BallstabError(f"competitor {i} ({kind}) is not an inner convex set")
        yield kind, area - polygon_area(comp), polygon_perimeter(comp)


def qmpcc_ratios(shape: RadialShape, eps: float, n: int, seed) -> tuple[np.ndarray, np.ndarray, tuple]:
    if shape.dim != 2:
        raise ValueError("quasi-minimality sampling is planar")
    if not convexity_check(shape).is_convex:
        raise AdmissibilityError("shape is not convex")
    rng = np.random.default_rng(seed)
    P = polygon_perimeter(_polygon(shape))
    kinds, removed, ratios = [], [], []
    for kind, v, Pc in inner_competitors(shape, eps, n, rng):
        kinds.append(kind)
        removed.append(v)
        ratios.append((P - Pc) / v)
    return np.array(ratios), np.array(removed), tuple(kinds)


def fit_qmpcc_constant(shape: RadialShape, eps: float, n: int, seed, safety: float = 1.25) -> float:
    """Calibrated Lambda: safety times the largest ratio over an independent sample."""
    ss = np.random.SeedSequence(seed).spawn(2)[1]
    ratios, _, _ = qmpcc_ratios(shape, eps, n, ss)
    return safety * float(ratios.max())


def qmpcc_verify(shape: RadialShape, Lambda: float, eps: float, n_competitors: int, seed) -> QmpccVerdict:
    """Check P(K) <= P(K') + Lambda |K \\ K'| over sampled inner convex competitors."""
    if Lambda < 0:
        raise ValueError("Lambda must be nonnegative")
    ss = np.random.SeedSequence(seed).spawn(2)[0]
    ratios, removed, kinds = qmpcc_ratios(shape, eps, n_competitors, ss)
    m = float(ratios.max())
    return QmpccVerdict(m <= Lambda, m, Lambda, ratios, removed, kinds)


# ---------------------------------------------------------------- diagram


@dataclass(frozen=True)
class DiagramResult:
    points: np.ndarray = field(repr=False)
    envelope: np.ndarray = field(repr=False)
    x0: float
    y0: float
    slope: float
    curvature: float
    target: float

    @property
    def relative_error(self) -> float:
        return abs(self.slope - self.target) / self.target

    def rows(self) -> list[dict]:
        return [{"sample": i, "P": float(x), "lambda1": float(y)} for i, (x, y) in enumerate(self.points)]

    def envelope_rows(self) -> list[dict]:
        return [{"bin": i, "P": float(x), "lambda1": float(y)} for i, (x, y) in enumerate(self.envelope)]


def _diagram_point(args):
    seed, band, l_max, mesh_size = args
    rng = np.random.default_rng(seed)
    mesh = cached_mesh(2, mesh_size)
    r = _unit_radius(2)
    b = get_basis(2, l_max)
    x0 = r * 2.0 * math.pi
    sd = np.where(b.degrees >= 2, np.maximum(b.degrees, 1.0) ** -3.0, 0.0)
    for _ in range(100):
        c = rng.standard_normal(b.size) * sd
        c /= np.linalg.norm(c)
        excess = band * rng.random()
        h = RadialShape(2, c)

        def gap(e):
            return r * perimeter(normalize(h.with_coeffs(e * c))) - x0 - excess

        pc2 = float(np.sum(c**2 * (b.eigenvalues - 1.0)))
        e_hi = 2.0 * math.sqrt(2.0 * max(excess, 1e-12) / (r * pc2))
        try:
            while gap(e_hi) < 0:
                e_hi *= 1.5
                if e_hi > 2.0:
                    raise ValueError
            e = brentq(gap, 0.0, e_hi, xtol=1e-13)
            shape = normalize(h.with_coeffs(e * c))
        except (ValueError, BallstabError):
            continue
        if not convexity_check(shape).is_convex:
            continue
        lam = lambda1(shape, mesh).lam / r**2
        return r * perimeter(shape), lam
    raise ConvergenceError("no convex sample found in 100 draws")


def fit_envelope(points: np.ndarray, x0: float, y0: float, band: float, n_bins: int = 10):
    """Bin-wise maxima of y and a least-squares fit y - y0 = s (x - x0) + q (x - x0)^2."""
    edges = np.linspace(0.0, band, n_bins + 1)
    dx = points[:, 0] - x0
    env = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = np.flatnonzero((dx >= lo) & (dx < hi))
        if len(sel) == 0:
            continue
        k = sel[np.argmax(points[sel, 1])]
        env.append(points[k])
    env = np.array(env)
    if len(env) < 3 or not np.any((env[:, 0] - x0) < 2.0 * band / n_bins):
        raise ConvergenceError("too few envelope points near the ball")
    X = env[:, 0] - x0
    A = np.column_stack([X, X**2])
    s, q = np.linalg.lstsq(A, env[:, 1] - y0, rcond=None)[0]
    return env, float(s), float(q)


def bs_diagram_sample(n: int, seed, band: float = 0.05, l_max: int = 8, mesh_size: float = 0.04, workers: int = 1) -> DiagramResult:
    """(P, lambda_1) of random unit-volume convex planar bodies near the disk.

    Directions have coefficient spread l^(-3); the amplitude is solved so the
    perimeter excess is uniform in [0, band]. Per-sample seeds are spawned
    from ``seed`` so results do not depend on ``workers``.
    """
    if n < 200:
        raise ValueError("need n >= 200 samples")
    if band <= 0:
        raise ValueError("band must be positive")
    seeds = np.random.SeedSequence(seed).spawn(n)
    jobs = [(s, band, l_max, mesh_size) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            pts = list(ex.map(_diagram_point, jobs, chunksize=16))
    else:
        pts = [_diagram_point(j) for j in jobs]
    points = np.array(pts)
    r = _unit_radius(2)
    x0 = r * 2.0 * math.pi
    y0 = lambda1(ball(2, l_max), cached_mesh(2, mesh_size)).lam / r**2
    env, s, q = fit_envelope(points, x0, y0, band)
    return DiagramResult(points, env, x0, y0, s, q, 1.0 / c_star_formula(2))


# ---------------------------------------------------------------- persistence


def _fmt(v):
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(path: str | Path, rows: list[dict], columns: list[str] | None = None) -> None:
    """CSV with a fixed column order (taken from the first row unless given)."""
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c, "")) for c in columns])


def write_summary(path: str | Path, summary: dict) -> None:
    lines = [SUMMARY_HEADER]
    for k, v in summary.items():
        if isinstance(v, (list, tuple, np.ndarray)):
            v = json.dumps([float(x) for x in v])
        lines.append(f"{k}={_fmt(v)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_summary(path: str | Path) -> dict:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != SUMMARY_HEADER:
        raise ValueError(f"{path}: missing '{SUMMARY_HEADER}' header")
    return dict(line.split("=", 1) for line in lines[1:] if line)


PLOT_TEMPLATE = """import csv
import sys

import matplotlib.pyplot as plt

rows = list(csv.DictReader(open("{csv}")))
x = [float(r["{x}"]) for r in rows]
y = [float(r["{y}"]) for r in rows]
plt.{kind}(x, y{style})
plt.xlabel("{x}")
plt.ylabel("{y}")
{extra}plt.savefig(sys.argv[1] if len(sys.argv) > 1 else "{name}.png", dpi=150)
"""


def plot_script(csv_name: str, x: str, y: str, scatter: bool = False, loglog: bool = False) -> str:
    """Matplotlib script drawing column ``y`` against ``x`` of a run CSV."""
    extra = 'plt.xscale("log")\nplt.yscale("log")\n' if loglog else ""
    style = ', ".", markersize=2' if scatter else ', "o-"'
    return PLOT_TEMPLATE.format(csv=csv_name, x=x, y=y, kind="plot", style=style, extra=extra, name=csv_name[:-4])


def write_run(run_dir: str | Path, config: dict, tables: dict, summary: dict, plots: dict | None = None, shapes: dict | None = None) -> Path:
    """Populate ``run_dir`` with config.json, CSV tables, summary.txt, plot scripts and shape files."""
    run = Path(run_dir)
    run.mkdir(parents=True, exist_ok=True)
    (run / "config.json").write_text(json.dumps(config, indent=1, sort_keys=True) + "\n")
    for name, rows in tables.items():
        write_csv(run / f"{name}.csv", rows)
    write_summary(run / "summary.txt", summary)
    for name, text in (plots or {}).items():
        (run / f"plot_{name}.py").write_text(text)
    for name, shape in (shapes or {}).items():
        write_shape(run / f"{name}.shape", shape)
    return run
