"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat 3]
"""

import argparse
import time

import numpy as np

from ballstab import _kernels_py
from ballstab.capacity import boundary_samples
from ballstab.fem import element_points, pullback_coefficients
from ballstab.mesh import build_mesh
from ballstab.shapes import shape_from_modes

try:
    from ballstab import _kernels as compiled
except ImportError:
    compiled = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    mesh = build_mesh(3, 0.1)
    shape = shape_from_modes(3, 4, {(2, 0): 0.1})
    coef = pullback_coefficients(shape, mesh)
    ep = element_points(mesh)
    ne = len(mesh.simplices)
    em_args = tuple(np.ascontiguousarray(a) for a in (mesh.barycentric_gradients, mesh.volumes, coef.A, coef.Jq, ep.phi, ep.wq))
    pts, w = boundary_samples(shape, 1500)
    G = _kernels_py.riesz_gram(pts, w)
    mu0 = w / w.sum()
    return [
        (f"element_matrices ({ne} tets)", "element_matrices", em_args),
        ("riesz_gram (1500 pts)", "riesz_gram", (pts, w)),
        ("frank_wolfe_away (1500 pts)", "frank_wolfe_away", (G, mu0, 1e-8, 200000)),
    ]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"{'kernel':<34} {'python [s]':>11} {'compiled [s]':>13} {'speedup':>8}")
    for label, name, fargs in cases():
        tp = best_of(lambda: getattr(_kernels_py, name)(*fargs), args.repeat)
        if compiled is None:
            print(f"{label:<34} {tp:>11.4f} {'n/a':>13} {'':>8}")
            continue
        tc = best_of(lambda: getattr(compiled, name)(*fargs), args.repeat)
        print(f"{label:<34} {tp:>11.4f} {tc:>13.4f} {tp / tc:>7.1f}x")


if __name__ == "__main__":
    main()
