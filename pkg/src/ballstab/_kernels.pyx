# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops; see _kernels_py for the reference."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, M_PI

cnp.import_array()


def element_matrices(double[:, :, ::1] grads, double[::1] vols, double[:, :, ::1] A,
                     double[:, ::1] Jq, double[:, ::1] phi, double[::1] wq):
    cdef Py_ssize_t ne = grads.shape[0], k = grads.shape[1], d = grads.shape[2]
    cdef Py_ssize_t nq = phi.shape[0]
    cdef Py_ssize_t e, i, j, a, b, q
    cdef double s, t, w
    cdef double tmp[4][3]
    Ke_arr = np.empty((ne, k, k))
    Me_arr = np.empty((ne, k, k))
    cdef double[:, :, ::1] Ke = Ke_arr
    cdef double[:, :, ::1] Me = Me_arr
    for e in range(ne):
        for i in range(k):
            for b in range(d):
                s = 0.0
                for a in range(d):
                    s += grads[e, i, a] * A[e, a, b]
                tmp[i][b] = s
        for i in range(k):
            for j in range(i, k):
                s = 0.0
                for b in range(d):
                    s += tmp[i][b] * grads[e, j, b]
                s *= vols[e]
                Ke[e, i, j] = s
                Ke[e, j, i] = s
                t = 0.0
                for q in range(nq):
                    t += Jq[e, q] * wq[q] * phi[q, i] * phi[q, j]
                t *= vols[e]
                Me[e, i, j] = t
                Me[e, j, i] = t
    return Ke_arr, Me_arr


def riesz_gram(double[:, ::1] points, double[::1] weights):
    cdef Py_ssize_t n = points.shape[0], d = points.shape[1]
    cdef Py_ssize_t i, j, a
    cdef double r2, diff
    G_arr = np.empty((n, n))
    cdef double[:, ::1] G = G_arr
    for i in range(n):
        G[i, i] = 2.0 * sqrt(M_PI / weights[i])
        for j in range(i + 1, n):
            r2 = 0.0
            for a in range(d):
                diff = points[i, a] - points[j, a]
                r2 += diff * diff
            G[i, j] = 1.0 / sqrt(r2)
            G[j, i] = G[i, j]
    return G_arr


def frank_wolfe_away(double[:, ::1] G, mu_in, double tol, Py_ssize_t max_iter):
    cdef Py_ssize_t n = G.shape[0]
    mu_arr = np.array(mu_in, dtype=float)
    cdef double[::1] mu = mu_arr
    g_arr = np.asarray(G) @ mu_arr
    cdef double[::1] g = g_arr
    trace_arr = np.empty(max_iter + 1)
    cdef double[::1] trace = trace_arr
    cdef double energy = 0.0, gap = np.inf, curv, slope, step, step_max, gmin, gmax
    cdef Py_ssize_t i, s, v, it = 0, last = 0
    for i in range(n):
        energy += mu[i] * g[i]
    trace[0] = energy
    for it in range(1, max_iter + 1):
        s = 0
        gmin = g[0]
        for i in range(1, n):
            if g[i] < gmin:
                gmin = g[i]
                s = i
        gap = 2.0 * (energy - gmin)
        if gap < tol:
            break
        v = -1
        gmax = 0.0
        for i in range(n):
            if mu[i] > 0.0 and (v < 0 or g[i] > gmax):
                gmax = g[i]
                v = i
        if energy - g[s] >= g[v] - energy or mu[v] >= 1.0:
            curv = G[s, s] - 2.0 * g[s] + energy
            slope = g[s] - energy
            step = 1.0
            if curv > 0 and -slope / curv < 1.0:
                step = -slope / curv
            for i in range(n):
                mu[i] *= 1.0 - step
                g[i] = (1.0 - step) * g[i] + step * G[i, s]
            mu[s] += step
        else:
            curv = G[v, v] - 2.0 * g[v] + energy
            slope = energy - g[v]
            step_max = mu[v] / (1.0 - mu[v])
            step = step_max
            if curv > 0 and -slope / curv < step_max:
                step = -slope / curv
            for i in range(n):
                mu[i] *= 1.0 + step
                g[i] = (1.0 + step) * g[i] - step * G[i, v]
            mu[v] -= step
            if step == step_max:
                mu[v] = 0.0
        energy = 0.0
        for i in range(n):
            energy += mu[i] * g[i]
        trace[it] = energy
        last = it
    return mu_arr, energy, last, gap, trace_arr[: last + 1].copy()
