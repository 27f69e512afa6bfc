"""Pure numpy implementations of the hot loops.

These mirror the compiled versions in ``_kernels.pyx`` and serve both as a
fallback when the extension is unavailable and as a reference in tests.
"""

from __future__ import annotations

import numpy as np


def element_matrices(grads, vols, A, Jq, phi, wq):
    """Local P1 stiffness and weighted mass matrices.

    grads: (ne, k, d) hat-function gradients; vols: (ne,); A: (ne, d, d)
    per-element conductivity; Jq: (ne, nq) mass weights at the quadrature
    points; phi: (nq, k) hat values at those points; wq: (nq,) weights
    summing to one.
    """
    Ke = np.einsum("eia,eab,ejb->eij", grads, A, grads) * vols[:, None, None]
    Me = np.einsum("eq,qi,qj->eij", Jq * wq[None, :], phi, phi) * vols[:, None, None]
    return Ke, Me


def riesz_gram(points, weights):
    """Newtonian kernel 1/|x_i - x_j| with an equal-area disk self term.

    The diagonal is the mean of the kernel over a flat disk of area
    weights[i] centred at x_i, which is 2*pi*R/a = 2*sqrt(pi/a).
    """
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    np.fill_diagonal(dist, 1.0)
    G = 1.0 / dist
    np.fill_diagonal(G, 2.0 * np.sqrt(np.pi / weights))
    return G


def frank_wolfe_away(G, mu, tol, max_iter):
    """Minimise mu^T G mu over the probability simplex.

    Frank-Wolfe with away steps and exact line search. Returns the final
    measure, its energy, the iteration count, the final Wolfe gap and the
    energy recorded after every iteration.
    """
    mu = np.array(mu, dtype=float)
    g = G @ mu
    energy = float(mu @ g)
    trace = np.empty(max_iter + 1)
    trace[0] = energy
    gap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        s = int(np.argmin(g))
        gap = 2.0 * (energy - g[s])
        if gap < tol:
            it -= 1
            break
        support = np.flatnonzero(mu > 0.0)
        v = int(support[np.argmax(g[support])])
        fw_gain = energy - g[s]
        away_gain = g[v] - energy
        if fw_gain >= away_gain or mu[v] >= 1.0:
            # direction e_s - mu
            curv = G[s, s] - 2.0 * g[s] + energy
            slope = g[s] - energy
            step_max = 1.0
            step = min(step_max, -slope / curv) if curv > 0 else step_max
            mu *= 1.0 - step
            mu[s] += step
            g = (1.0 - step) * g + step * G[:, s]
        else:
            # direction mu - e_v
            curv = G[v, v] - 2.0 * g[v] + energy
            slope = energy - g[v]
            step_max = mu[v] / (1.0 - mu[v])
            step = min(step_max, -slope / curv) if curv > 0 else step_max
            mu *= 1.0 + step
            mu[v] -= step
            if step == step_max:
                mu[v] = 0.0
            g = (1.0 + step) * g - step * G[:, v]
        energy = float(mu @ g)
        trace[it] = energy
    return mu, energy, it, gap, trace[: it + 1].copy()
