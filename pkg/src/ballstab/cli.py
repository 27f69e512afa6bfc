"""Command-line entry point: ``ballstab <subcommand> [options]``.

Every run writes a directory under $BALLSTAB_RUNS (default ./runs) holding
config.json, CSV tables, summary.txt and plot scripts. Exit status is 0 on
success, 2 when the run's verdict fails and 1 on usage or config errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .errors import BallstabError

EXIT_OK, EXIT_USAGE, EXIT_VERDICT = 0, 1, 2
RUNS_ENV = "BALLSTAB_RUNS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


# option name -> (config field, type, help)
_COMMON = {
    "--dim": ("dim", int, "ambient dimension (2 or 3)"),
    "--seed": ("seed", int, "random seed"),
    "--mesh-size": ("mesh_size", float, "target mesh size of the unit-ball mesh"),
    "--l-max": ("l_max", int, "largest harmonic degree"),
}
_OPTIONS = {
    "eval": {
        "--shape": ("shape", str, "shape file (#shape v1)"),
        "--functionals": ("functionals", str, "comma list of P,lambda1,volume,barycenter,capacity,asymmetry,hausdorff,convexity"),
    },
    "threshold": {
        "--fem": ("fem", "flag", "also compute the finite element mode table"),
    },
    "fuglede": {
        "--functional": ("functional", str, "P, lambda1, J_c or cap_inv"),
        "--c": ("c", float, "weight of lambda_1 in J_c"),
        "--mode": ("mode", int, "harmonic degree of the direction"),
        "--eps": ("eps_grid", _floats, "comma list of amplitudes"),
    },
    "capacity": {
        "--shape": ("shape", str, "shape file; default is the unit ball"),
        "--n-points": ("n_points", _ints, "comma list of sample counts"),
        "--eps-cap": ("eps_cap", float, "weight of 1/Cap for the stability margin"),
        "--corpus": ("corpus", int, "size of a seeded corpus for the capacity gap ratio"),
    },
    "optimize": {
        "--c": ("c", float, "weight of lambda_1"),
        "--mu": ("mu", float, "asymmetry penalty weight"),
        "--target-asymmetry": ("target_asymmetry", float, "asymmetry target a (default: start value when --mu > 0)"),
        "--start": ("start", str, "random, mode2 or ball"),
        "--start-amplitude": ("start_amplitude", float, "amplitude of the start perturbation"),
        "--noise": ("noise", float, "seeded noise added to the start"),
        "--max-iter": ("max_iter", int, "iteration cap"),
        "--convexity-weight": ("convexity_weight", float, "hinge penalty weight"),
        "--huber-width": ("huber_width", float, "smoothing width of the asymmetry penalty"),
        "--box-scale": ("box_scale", float, "bound on the radial function"),
    },
    "qmpcc": {
        "--shape": ("shape", str, "convex shape file"),
        "--lambda": ("qm_lambda", float, "quasi-minimality constant (fitted when absent)"),
        "--eps": ("qm_eps", float, "largest removed area"),
        "--n-competitors": ("n_competitors", int, "number of inner competitors"),
    },
    "diagram": {
        "--n": ("n_samples", int, "number of sampled bodies"),
        "--band": ("band", float, "perimeter excess band"),
        "--workers": ("workers", int, "worker processes"),
    },
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ballstab", description="Stability of the ball for perimeter, eigenvalue and capacity functionals.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for name, opts in _OPTIONS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file; flags override its values")
        sp.add_argument("--run-dir", help=f"output directory (default: ${RUNS_ENV}/<name>)")
        for flag, (dest, typ, help_) in {**_COMMON, **opts}.items():
            if typ == "flag":
                sp.add_argument(flag, dest=dest, action="store_const", const=True, default=None, help=help_)
            else:
                sp.add_argument(flag, dest=dest, type=typ, default=None, help=help_)
    return p


def load_config(command: str, args: argparse.Namespace):
    from .experiments import ExperimentConfig

    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
    data["kind"] = command
    for flag, (dest, _, _) in {**_COMMON, **_OPTIONS[command]}.items():
        v = getattr(args, dest, None)
        if v is not None:
            data[dest] = v
    if command == "optimize" and "target_asymmetry" not in data and data.get("mu", 0.0) > 0.0:
        data["target_asymmetry"] = None
    try:
        return ExperimentConfig.from_dict(data).validate()
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def run_directory(cfg, explicit: str | None) -> Path:
    if explicit:
        return Path(explicit)
    digest = hashlib.sha1(json.dumps(cfg.to_dict(), sort_keys=True).encode()).hexdigest()[:10]
    seed = "na" if cfg.seed is None else str(cfg.seed)
    return Path(os.environ.get(RUNS_ENV, "runs")) / f"{cfg.kind}_{seed}_{digest}"


# ---------------------------------------------------------------- subcommands


def _load_shape(path):
    from .shapes import read_shape

    try:
        return read_shape(path)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read shape {path}: {exc}") from exc


def cmd_eval(cfg):
    from . import capacity, fem, shapes

    if not cfg.shape:
        raise UsageError("eval needs --shape")
    shape = _load_shape(cfg.shape)
    ref = shapes.ball(shape.dim, shape.l_max)
    out = {}
    for name in [f.strip() for f in cfg.functionals.split(",") if f.strip()]:
        if name == "P":
            out["P"] = shapes.perimeter(shape)
        elif name == "lambda1":
            out["lambda1"] = fem.lambda1(shape, fem.cached_mesh(shape.dim, cfg.mesh_size)).lam
        elif name == "volume":
            out["volume"] = shapes.volume(shape)
        elif name == "barycenter":
            out["barycenter"] = shapes.barycenter(shape).tolist()
        elif name == "capacity":
            out["capacity"] = capacity.riesz_capacity(shape)
        elif name == "asymmetry":
            out["asymmetry"] = shapes.symmetric_difference(shape, ref)
        elif name == "hausdorff":
            out["hausdorff"] = shapes.hausdorff_distance(shape, ref)
        elif name == "convexity":
            out["min_curvature_proxy"] = shapes.convexity_check(shape).min_curvature_proxy
        else:
            raise UsageError(f"unknown functional {name!r}")
    for k, v in out.items():
        print(f"{k} = {v:.6g}" if isinstance(v, float) else f"{k} = {v}")
    rows = [{"functional": k, "value": json.dumps(v) if isinstance(v, list) else v} for k, v in out.items()]
    return {"values": rows}, dict(out), {}, True


def cmd_threshold(cfg):
    from .experiments import plot_script
    from .fem import cached_mesh
    from .stability import analytic_mode_spectrum, c_star_formula, mode_spectrum

    spectrum = analytic_mode_spectrum(cfg.dim, max(cfg.l_max, 2))
    c_formula = c_star_formula(cfg.dim)
    print(f"c* = {c_formula:.6f}  (dim {cfg.dim}, unit volume)")
    print(f"min_l c_l = {spectrum.c_star:.6f} at l = {spectrum.argmin}")
    print(f"{'l':>3} {'P2':>12} {'L2':>12} {'c_l':>10}")
    for row in spectrum.rows():
        print(f"{row['l']:>3} {row['P2']:>12.6f} {row['L2']:>12.6f} {row['c_l']:>10.6f}")
    tables = {"modes": spectrum.rows()}
    summary = {"dim": cfg.dim, "c_star_formula": c_formula, "c_star_modewise": spectrum.c_star, "argmin": spectrum.argmin}
    ok = abs(spectrum.c_star - c_formula) <= 1e-6 * c_formula
    if cfg.fem:
        t0 = time.perf_counter()
        fs = mode_spectrum(cfg.dim, cfg.l_max, cached_mesh(cfg.dim, cfg.mesh_size), with_fd=True)
        print(f"finite element c* = {fs.c_star:.6f} at l = {fs.argmin} ({time.perf_counter() - t0:.1f} s)")
        tables["modes_fem"] = fs.rows()
        summary["c_star_fem"] = fs.c_star
        summary["fem_relative_error"] = abs(fs.c_star - c_formula) / c_formula
        ok = ok and summary["fem_relative_error"] <= 0.01
    return tables, summary, {"modes": plot_script("modes.csv", "l", "c_l")}, ok


def cmd_fuglede(cfg):
    from .experiments import plot_script
    from .fem import cached_mesh
    from .stability import FUNCTIONALS, c_star_formula, fuglede_remainder
    from .shapes import shape_from_modes

    if cfg.functional not in FUNCTIONALS:
        raise UsageError(f"functional must be one of {FUNCTIONALS}")
    dim = 3 if cfg.functional == "cap_inv" else cfg.dim
    l_max = max(cfg.l_max, cfg.mode)
    direction = shape_from_modes(dim, l_max, {(cfg.mode, cfg.mode if dim == 2 else 0): 1.0})
    eps = cfg.eps_grid or [0.4, 0.2, 0.1, 0.05, 0.025]
    mesh = cached_mesh(dim, cfg.mesh_size) if cfg.functional in ("lambda1", "J_c") else None
    lad = fuglede_remainder(cfg.functional, direction, eps, mesh, cfg.c if cfg.functional == "J_c" else None)
    print(f"{'eps':>8} {'value':>14} {'remainder':>12} {'increment':>12}")
    for row in lad.rows():
        print(f"{row['eps']:>8.4g} {row['value']:>14.9f} {row['remainder']:>12.3e} {row['increment']:>12.3e}")
    print(f"remainder slope = {lad.slope:.3f}")
    ok = lad.slope > 2.0
    summary = {"functional": cfg.functional, "slope": lad.slope, "F0": lad.base_value, "F1": lad.first_derivative, "F2": lad.second_derivative}
    if cfg.functional == "J_c":
        inc = lad.increments
        cstar = c_star_formula(dim)
        summary.update({"c": cfg.c, "c_star": cstar, "all_positive": bool(np.all(inc > 0)), "any_negative": bool(np.any(inc < 0))})
        ok = ok and (summary["all_positive"] if cfg.c < cstar else summary["any_negative"])
    plots = {"ladder": plot_script("ladder.csv", "eps", "remainder", loglog=True)}
    return {"ladder": lad.rows()}, summary, plots, ok


def cmd_capacity(cfg):
    from .capacity import CAP_UNIT_BALL, capacity_gap_corpus, capacity_ladder, weak_stability_margin
    from .experiments import plot_script
    from .shapes import ball

    if cfg.corpus > 0:
        rows = capacity_gap_corpus(cfg.corpus, cfg.seed, min(cfg.l_max, 6))
        ratios = np.array([r["ratio"] for r in rows])
        half = ratios[: max(1, len(ratios) // 2)]
        summary = {"corpus": cfg.corpus, "gap_constant": float(ratios.max()), "gap_constant_half": float(half.max()), "min_gap": float(min(r["gap"] for r in rows))}
        summary["stability"] = summary["gap_constant"] / summary["gap_constant_half"] - 1.0
        print(f"gap constant = {summary['gap_constant']:.6f} (first half {summary['gap_constant_half']:.6f})")
        ok = summary["stability"] <= 0.25 and summary["min_gap"] >= 0.0
        return {"corpus": rows}, summary, {"corpus": plot_script("corpus.csv", "h1_sq", "gap", scatter=True)}, ok

    shape = _load_shape(cfg.shape) if cfg.shape else ball(3, 4)
    if shape.dim != 3:
        raise UsageError("capacity needs a 3D shape")
    sizes = cfg.n_points or [250, 500, 1000, 2000]
    ladder = capacity_ladder(shape, sizes)
    rows = [{"n_points": n, "capacity": cap, "ratio_to_ball": cap / CAP_UNIT_BALL} for n, cap in ladder]
    for r in rows:
        print(f"n = {r['n_points']:>5}  Cap = {r['capacity']:.6f}  Cap/4pi = {r['ratio_to_ball']:.6f}")
    caps = np.array([c for _, c in ladder])
    summary = {"capacity": float(caps[-1]), "monotone": bool(np.all(np.diff(caps) <= 0))}
    if cfg.eps_cap > 0:
        summary["weak_stability_margin"] = weak_stability_margin(shape, cfg.eps_cap, sizes[-1])
        print(f"margin = {summary['weak_stability_margin']:.3e}")
    return {"ladder": rows}, summary, {"ladder": plot_script("ladder.csv", "n_points", "capacity")}, summary["monotone"]


def cmd_optimize(cfg):
    from .experiments import penalized_minimize, plot_script
    from .stability import c_star_formula

    rec = penalized_minimize(cfg)
    s = rec.summary
    below = cfg.c < c_star_formula(2)
    ok = rec.flags["convex"] and rec.flags["unit_volume"]
    ok = ok and (s["asymmetry"] < 1e-3 if below else s["J_c_gap"] < -1e-5)
    for k in ("J_c", "J_c_ball", "J_c_gap", "asymmetry", "hausdorff", "iterations"):
        print(f"{k} = {s[k]:.6g}")
    # wall-clock time is printed but kept out of the run files so reruns are byte-identical
    print(f"wall clock = {rec.wall_clock:.2f} s")
    summary = {**s, **rec.flags}
    return {"trace": rec.trace}, summary, {"trace": plot_script("trace.csv", "iteration", "objective")}, ok, {"final": rec.shape}


def cmd_qmpcc(cfg):
    from .experiments import fit_qmpcc_constant, qmpcc_verify

    if not cfg.shape:
        raise UsageError("qmpcc needs --shape")
    shape = _load_shape(cfg.shape)
    lam = cfg.qm_lambda
    fitted = lam is None
    if fitted:
        lam = fit_qmpcc_constant(shape, cfg.qm_eps, cfg.n_competitors, cfg.seed)
    v = qmpcc_verify(shape, lam, cfg.qm_eps, cfg.n_competitors, cfg.seed)
    print(f"Lambda = {lam:.6g}{' (fitted)' if fitted else ''}  max ratio = {v.max_ratio:.6g}  {'pass' if v.passed else 'fail'}")
    summary = {"Lambda": lam, "fitted": fitted, "max_ratio": v.max_ratio, "passed": v.passed}
    return {"competitors": v.rows()}, summary, {}, v.passed


def cmd_diagram(cfg):
    from .experiments import bs_diagram_sample, plot_script

    res = bs_diagram_sample(cfg.n_samples, cfg.seed, cfg.band, cfg.l_max, cfg.mesh_size, cfg.workers)
    print(f"envelope slope = {res.slope:.4f}  target 1/c* = {res.target:.4f}  relative error = {res.relative_error:.3f}")
    summary = {"x0": res.x0, "y0": res.y0, "slope": res.slope, "curvature": res.curvature, "target": res.target, "relative_error": res.relative_error}
    plots = {"samples": plot_script("samples.csv", "P", "lambda1", scatter=True), "envelope": plot_script("envelope.csv", "P", "lambda1")}
    return {"samples": res.rows(), "envelope": res.envelope_rows()}, summary, plots, res.relative_error <= 0.15


COMMANDS = {
    "eval": cmd_eval,
    "threshold": cmd_threshold,
    "fuglede": cmd_fuglede,
    "capacity": cmd_capacity,
    "optimize": cmd_optimize,
    "qmpcc": cmd_qmpcc,
    "diagram": cmd_diagram,
}


def main(argv: list[str] | None = None) -> int:
    from .experiments import write_run

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand; choose from " + ", ".join(COMMANDS))
        cfg = load_config(args.command, args)
        result = COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"ballstab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BallstabError as exc:
        print(f"ballstab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VERDICT
    tables, summary, plots, ok = result[:4]
    shapes = result[4] if len(result) > 4 else None
    summary = {"command": args.command, **summary, "verdict": "pass" if ok else "fail"}
    run = write_run(run_directory(cfg, args.run_dir), cfg.to_dict(), tables, summary, plots, shapes)
    print(f"run directory: {run}")
    return EXIT_OK if ok else EXIT_VERDICT


if __name__ == "__main__":
    sys.exit(main())
