import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from ballstab.spherical import (
    bessel_first_zero,
    bessel_j,
    build_quadrature,
    get_basis,
    holder_seminorm,
    mode_index,
    sobolev_norm,
)


@pytest.mark.parametrize("dim,total", [(2, 2 * math.pi), (3, 4 * math.pi)])
def test_weights_sum_to_sphere_area(dim, total):
    q = build_quadrature(dim, 8)
    assert abs(q.weights.sum() / total - 1) < 1e-12
    assert np.all(q.weights > 0)


def test_trapezoid_kills_cos3():
    q = build_quadrature(2, 4)
    assert abs(q.integrate(np.cos(3 * q.angles))) < 1e-12


@pytest.mark.parametrize("dim,l_max", [(2, 10), (3, 6)])
def test_basis_orthonormal_and_gradient_norms(dim, l_max):
    b = get_basis(dim, l_max)
    w = b.quadrature.weights
    gram = b.values.T @ (w[:, None] * b.values)
    assert np.allclose(gram, np.eye(b.size), atol=1e-8)
    gnorm = np.einsum("n,nkd,nkd->k", w, b.gradients, b.gradients)
    assert np.allclose(gnorm, b.eigenvalues, atol=1e-8)


def test_quadrature_integrates_harmonics_to_zero():
    b = get_basis(3, 6)
    ints = b.quadrature.weights @ b.values
    assert abs(ints[0] - math.sqrt(4 * math.pi)) < 1e-10
    assert np.max(np.abs(ints[1:])) < 1e-10


def test_real_harmonics_match_scipy():
    # independent evaluation of Y_{3,2} through scipy's associated Legendre functions
    b = get_basis(3, 4)
    polar, azim = b.quadrature.angles[:, 0], b.quadrature.angles[:, 1]
    norm = math.sqrt(7 / (4 * math.pi) * math.factorial(1) / math.factorial(5))
    ref = math.sqrt(2) * norm * special.lpmv(2, 3, np.cos(polar)) * np.cos(2 * azim)
    assert np.allclose(b.values[:, mode_index(3, 3, 2)], ref, atol=1e-12)


def test_parseval_random(rng):
    b = get_basis(3, 8)
    c = rng.standard_normal(b.size)
    f = b.synthesize(c)
    assert abs(b.quadrature.integrate(f * f) - c @ c) < 1e-8


def test_sobolev_examples():
    b = get_basis(2, 4)
    e0 = np.zeros(b.size)
    e0[0] = 1.0
    assert sobolev_norm(e0, 1.0, b) == pytest.approx(1.0)
    assert sobolev_norm(b.mode_vector(2), 1.0, b) == pytest.approx(math.sqrt(5))
    assert sobolev_norm(np.zeros(b.size), 0.5, b) == 0.0
    with pytest.raises(ValueError):
        sobolev_norm(e0, 1.5, b)
    with pytest.raises(ValueError):
        sobolev_norm(e0[:3], 1.0, b)


@given(st.lists(st.floats(-10, 10), min_size=9, max_size=9))
def test_sobolev_monotone_in_s(vals):
    b = get_basis(2, 4)
    c = np.array(vals)
    n0, nh, n1 = (sobolev_norm(c, s, b) for s in (0.0, 0.5, 1.0))
    assert n0 <= nh * (1 + 1e-12) + 1e-300
    assert nh <= n1 * (1 + 1e-12) + 1e-300


@pytest.mark.parametrize("nu,order", [(0.0, 0), (1.0, 1)])
def test_bessel_zero_matches_scipy(nu, order):
    assert bessel_first_zero(nu) == pytest.approx(special.jn_zeros(order, 1)[0], abs=1e-11)


def test_bessel_half_order_zero_is_pi():
    assert bessel_first_zero(0.5) == pytest.approx(math.pi, abs=1e-11)
    assert bessel_first_zero(0.0) ** 2 == pytest.approx(5.7832, abs=1e-4)


def test_bessel_series_matches_scipy():
    x = np.linspace(0.1, 8.0, 40)
    for nu in (0.0, 0.5, 2.0, 3.5):
        assert np.allclose(bessel_j(nu, x), special.jv(nu, x), atol=1e-12)


def test_holder_examples():
    assert holder_seminorm(np.full(64, 0.3), 0.5) == 0.0
    theta = np.linspace(0, math.pi, 200)
    assert holder_seminorm(theta, 1.0, angles=theta) == pytest.approx(1.0, rel=1e-9)
    eps = 0.01
    grid = 2 * math.pi * np.arange(256) / 256
    assert holder_seminorm(eps * np.cos(2 * grid), 1.0) == pytest.approx(2 * eps, rel=0.05)
    with pytest.raises(ValueError):
        holder_seminorm(np.ones(1), 0.5)


@pytest.mark.parametrize("dim,order", [(4, 8), (2, 0)])
def test_quadrature_rejects_bad_input(dim, order):
    with pytest.raises(ValueError):
        build_quadrature(dim, order)
