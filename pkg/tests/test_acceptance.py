"""End-to-end acceptance checks, one test per criterion.

Each test prints ``CRITERION n: PASS|FAIL ...`` and then asserts. The lines are
repeated in the terminal summary so they survive output capture.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.special import jn_zeros

from ballstab.capacity import CAP_UNIT_BALL, capacity_ladder
from ballstab.cli import main
from ballstab.experiments import read_summary
from ballstab.fem import cached_mesh, lambda1
from ballstab.shapes import ball, shape_from_modes
from ballstab.stability import c_star_formula, fuglede_remainder, mode_spectrum

RESULTS: list[str] = []
C_SEEDS = range(1, 11)


def report(n: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def cli(*args) -> tuple[int, float]:
    t0 = time.perf_counter()
    code = main([str(a) for a in args])
    return code, time.perf_counter() - t0


def csv_bytes(run: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(run.glob("*.csv"))}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def spectrum_2d():
    t0 = time.perf_counter()
    spectrum = mode_spectrum(2, 6, cached_mesh(2, 0.02), with_fd=True)
    return spectrum, time.perf_counter() - t0


@pytest.fixture(scope="module")
def corpus_runs(workdir):
    out = {}
    for tag in ("a", "b"):
        run = workdir / f"corpus_{tag}"
        code, secs = cli("capacity", "--corpus", 200, "--seed", 7, "--run-dir", run)
        out[tag] = (code, secs, run)
    return out


@pytest.fixture(scope="module")
def optimize_runs(workdir):
    runs = {}
    for c, extra in ((0.05, []), (0.12, ["--mu", 1.0, "--start", "mode2", "--noise", 0.002])):
        for seed in C_SEEDS:
            run = workdir / f"opt_{c}_{seed}"
            code, secs = cli("optimize", "--c", c, "--seed", seed, *extra, "--run-dir", run)
            runs[(c, seed)] = (code, secs, run, extra)
    return runs


@pytest.fixture(scope="module")
def diagram_runs(workdir):
    out = {}
    for tag in ("a", "b"):
        run = workdir / f"diagram_{tag}"
        code, secs = cli("diagram", "--n", 2000, "--band", 0.05, "--seed", 2024, "--workers", 1, "--run-dir", run)
        out[tag] = (code, secs, run)
    return out


def test_criterion_1_threshold(workdir):
    code, secs = cli("threshold", "--dim", 2, "--run-dir", workdir / "threshold")
    c = float(read_summary(workdir / "threshold" / "summary.txt")["c_star_formula"])
    report(1, code == 0 and abs(c - 0.077) <= 1e-3 and secs < 1.0, f"c*={c:.6f} target 0.077 tol 1e-3, {secs:.2f} s")


def test_criterion_2_modewise_threshold(spectrum_2d):
    spectrum, secs = spectrum_2d
    err = abs(spectrum.c_star - c_star_formula(2)) / c_star_formula(2)
    report(2, err <= 0.01 and secs < 120, f"modewise c*={spectrum.c_star:.6f} formula {c_star_formula(2):.6f} rel err {err:.2e}, {secs:.1f} s")


def test_criterion_3_eigen_accuracy():
    t0 = time.perf_counter()
    disk = lambda1(ball(2, 4), cached_mesh(2, 0.02)).lam
    t_disk = time.perf_counter() - t0
    t0 = time.perf_counter()
    sphere = lambda1(ball(3, 4), cached_mesh(3, 0.08)).lam
    t_ball = time.perf_counter() - t0
    j01 = jn_zeros(0, 1)[0] ** 2
    e2, e3 = abs(disk / j01 - 1), abs(sphere / math.pi**2 - 1)
    ok = e2 <= 0.005 and e3 <= 0.02 and t_disk < 60 and t_ball < 60
    report(3, ok, f"disk {disk:.5f} rel err {e2:.2e} ({t_disk:.1f} s); ball {sphere:.5f} rel err {e3:.2e} ({t_ball:.1f} s)")


def test_criterion_4_riesz_capacity():
    t0 = time.perf_counter()
    ladder = capacity_ladder(ball(3, 4), (250, 500, 1000, 2000))
    secs = time.perf_counter() - t0
    caps = np.array([c for _, c in ladder])
    err = abs(caps[-1] / (4 * math.pi) - 1)
    monotone = bool(np.all(np.diff(caps) <= 0))
    assert CAP_UNIT_BALL == pytest.approx(4 * math.pi)
    report(4, err <= 0.01 and monotone and secs < 120, f"Cap(2000)={caps[-1]:.5f} rel err {err:.2e}, monotone={monotone}, {secs:.1f} s")


def test_criterion_5_capacity_gap(corpus_runs):
    code, secs, run = corpus_runs["a"]
    s = read_summary(run / "summary.txt")
    full, half, low = float(s["gap_constant"]), float(s["gap_constant_half"]), float(s["min_gap"])
    drift = abs(full / half - 1)
    ok = code == 0 and drift <= 0.25 and low >= 0 and math.isfinite(full) and secs < 600
    report(5, ok, f"gap constant 100: {half:.4f}, 200: {full:.4f}, drift {drift:.1%}, min gap {low:.2e}, {secs:.1f} s")


def test_criterion_6_fuglede_ladders():
    t0 = time.perf_counter()
    y2 = shape_from_modes(2, 8, {(2, 2): 1.0})
    eps = [0.4, 0.2, 0.1, 0.05, 0.025]
    mesh = cached_mesh(2, 0.05)
    cs = c_star_formula(2)
    p = fuglede_remainder("P", y2, eps)
    lam = fuglede_remainder("lambda1", y2, eps, mesh)
    below = fuglede_remainder("J_c", y2, eps, mesh, c=0.9 * cs)
    above = fuglede_remainder("J_c", y2, eps, mesh, c=1.1 * cs)
    secs = time.perf_counter() - t0
    ok = p.slope >= 2.8 and lam.slope >= 2.5 and bool(np.all(below.increments > 0)) and bool(np.any(above.increments < 0)) and secs < 300
    report(
        6,
        ok,
        f"slopes P {p.slope:.2f}, lambda1 {lam.slope:.2f}; J_c(0.9c*) min increment {below.increments.min():.2e}; "
        f"J_c(1.1c*) min increment {above.increments.min():.2e}, {secs:.1f} s",
    )


def test_criterion_7_formula_cross_check(spectrum_2d):
    spectrum, secs = spectrum_2d
    b, v, fd = spectrum.eigenvalue[2:], spectrum.eigenvalue_volumetric[2:], spectrum.eigenvalue_fd[2:]
    bv, bf, vf = np.abs(b - v) / np.abs(v), np.abs(b - fd) / np.abs(fd), np.abs(v - fd) / np.abs(fd)
    # degree 1 is a translation after normalisation: exact value 0, so compare on the degree-2 scale
    scale = abs(spectrum.eigenvalue[2])
    t1 = [abs(spectrum.eigenvalue[1] - spectrum.eigenvalue_volumetric[1]) / scale, abs(spectrum.eigenvalue[1] - spectrum.eigenvalue_fd[1]) / scale]
    ok = bv.max() <= 0.01 and bf.max() <= 0.02 and vf.max() <= 0.02 and t1[0] <= 0.01 and t1[1] <= 0.02
    detail = f"l=2..6 boundary/volumetric {bv.max():.2e}, boundary/FD {bf.max():.2e}, volumetric/FD {vf.max():.2e}; l=1 on l=2 scale {max(t1):.2e}"
    report(7, ok, detail)


def test_criterion_8_selection_principle(optimize_runs):
    worst_asym, worst_gap, bad, total = 0.0, -np.inf, [], 0.0
    for (c, seed), (code, secs, run, _) in optimize_runs.items():
        s = read_summary(run / "summary.txt")
        total += secs
        feasible = s["convex"] == "True" and s["unit_volume"] == "True"
        if c < 0.1:
            worst_asym = max(worst_asym, float(s["asymmetry"]))
            good = float(s["asymmetry"]) < 1e-3
        else:
            worst_gap = max(worst_gap, float(s["J_c_gap"]))
            good = float(s["J_c_gap"]) < -1e-5
        if code != 0 or not (good and feasible):
            bad.append((c, seed))
    ok = not bad and total < 1800
    report(8, ok, f"c=0.05 max asymmetry {worst_asym:.2e}; c=0.12 max J_c gap {worst_gap:.2e}; failing {bad}; {total:.1f} s")


def test_criterion_9_blaschke_santalo_tangent(diagram_runs):
    code, secs, run = diagram_runs["a"]
    s = read_summary(run / "summary.txt")
    err = float(s["relative_error"])
    report(9, code == 0 and err <= 0.15 and secs < 1800, f"slope {float(s['slope']):.3f} vs 1/c* {float(s['target']):.3f}, rel err {err:.3f}, {secs:.1f} s")


def test_criterion_10_determinism(corpus_runs, optimize_runs, diagram_runs, workdir):
    pairs = [(corpus_runs["a"][2], corpus_runs["b"][2]), (diagram_runs["a"][2], diagram_runs["b"][2])]
    for c, seed in ((0.05, 1), (0.05, 2), (0.12, 1), (0.12, 2)):
        _, _, run, extra = optimize_runs[(c, seed)]
        again = workdir / f"opt_{c}_{seed}_again"
        cli("optimize", "--c", c, "--seed", seed, *extra, "--run-dir", again)
        pairs.append((run, again))
    mismatched = [a.name for a, b in pairs if csv_bytes(a) != csv_bytes(b) or not csv_bytes(a)]
    report(10, not mismatched, f"{len(pairs)} run pairs compared byte for byte, mismatched {mismatched}")
