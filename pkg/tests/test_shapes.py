import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy.spatial import ConvexHull
from shapely.geometry import Polygon

from ballstab.errors import NotStarShapedError
from ballstab.shapes import (
    RadialShape,
    ball,
    barycenter,
    convexity_check,
    hausdorff_distance,
    normalize,
    perimeter,
    perimeter_gradient,
    random_shape,
    read_shape,
    shape_from_function,
    shape_from_modes,
    symmetric_difference,
    volume,
    volume_gradient,
    write_shape,
)


def polygon_of(shape, n=20000):
    t = 2 * math.pi * np.arange(n) / n
    d = np.column_stack([np.cos(t), np.sin(t)])
    return shape.radius(d)[:, None] * d


def test_volume_examples():
    assert volume(ball(2, 4)) == pytest.approx(math.pi, rel=1e-13)
    assert volume(ball(2, 4, radius=1.1)) == pytest.approx(1.21 * math.pi, rel=1e-13)
    assert volume(ball(3, 4, radius=1.2)) == pytest.approx(1.2**3 * 4 * math.pi / 3, rel=1e-12)
    assert perimeter(ball(2, 4)) == pytest.approx(2 * math.pi, rel=1e-13)
    assert perimeter(ball(3, 4)) == pytest.approx(4 * math.pi, rel=1e-12)


def test_perimeter_matches_simpson_oracle():
    # h = 0.1 cos(2 theta): coefficient of the normalised harmonic cos(2t)/sqrt(pi)
    shape = shape_from_modes(2, 6, {(2, 2): 0.1 * math.sqrt(math.pi)})
    t = np.linspace(0, 2 * math.pi, 100001)
    rho = 1 + 0.1 * np.cos(2 * t)
    drho = -0.2 * np.sin(2 * t)
    oracle = integrate.simpson(np.sqrt(rho**2 + drho**2), x=t)
    assert perimeter(shape) == pytest.approx(oracle, abs=1e-8)


def test_barycenter_matches_polygon_centroid(rng):
    shape = random_shape(rng, 2, 6, 0.2, l_min=1, normalize_mode=None)
    poly = Polygon(polygon_of(shape))
    assert np.allclose(barycenter(shape), [poly.centroid.x, poly.centroid.y], atol=1e-7)
    assert volume(shape) == pytest.approx(poly.area, rel=1e-7)


def test_even_shape_has_centred_barycenter():
    shape = shape_from_modes(3, 4, {(2, 0): 0.1, (4, 2): 0.05})
    assert np.max(np.abs(barycenter(shape))) < 1e-10


def test_volume_3d_matches_dblquad():
    def rho(polar, azim):
        return 1 + 0.2 * math.sin(polar) ** 2 * math.cos(azim) ** 2 + 0.1 * math.cos(polar)

    def fn(nodes):
        polar = np.arccos(np.clip(nodes[:, 2], -1, 1))
        azim = np.arctan2(nodes[:, 1], nodes[:, 0])
        return 1 + 0.2 * np.sin(polar) ** 2 * np.cos(azim) ** 2 + 0.1 * np.cos(polar)

    shape = shape_from_function(3, 6, fn)
    oracle, _ = integrate.dblquad(lambda p, a: rho(p, a) ** 3 / 3 * math.sin(p), 0, 2 * math.pi, 0, math.pi, epsabs=1e-12)
    assert volume(shape) == pytest.approx(oracle, rel=1e-9)


@pytest.mark.parametrize("amp,l", [(0.05, 3), (0.2, 3), (0.02, 5), (0.08, 5), (0.3, 2)])
def test_convexity_matches_hull_oracle(amp, l):
    shape = shape_from_modes(2, 6, {(l, l): amp})
    pts = polygon_of(shape, 4000)
    on_hull = len(ConvexHull(pts).vertices) == len(pts)
    assert convexity_check(shape).is_convex == on_hull


def test_convexity_3d_ellipsoid_and_dimple():
    ell = shape_from_function(3, 8, lambda x: 1 / np.sqrt(x[:, 0] ** 2 + x[:, 1] ** 2 + (x[:, 2] / 1.3) ** 2))
    assert convexity_check(ell).is_convex
    dimple = shape_from_modes(3, 8, {(6, 0): 0.2})
    rep = convexity_check(dimple)
    assert not rep.is_convex and rep.violating_nodes


def test_normalize_fixes_volume_and_barycenter(rng):
    shape = random_shape(rng, 3, 5, 0.2, l_min=0, normalize_mode=None)
    out = normalize(shape)
    assert volume(out) == pytest.approx(4 * math.pi / 3, rel=1e-10)
    assert np.max(np.abs(barycenter(out))) < 1e-10
    assert np.allclose(normalize(out).coeffs, out.coeffs)
    with pytest.raises(ValueError):
        normalize(shape, "sideways")


@given(st.floats(0.5, 2.0), st.integers(0, 2**32 - 1))
def test_dilation_scaling(t, seed):
    shape = random_shape(np.random.default_rng(seed), 2, 6, 0.2)
    big = shape.dilated(t)
    assert volume(big) == pytest.approx(t**2 * volume(shape), rel=1e-11)
    assert perimeter(big) == pytest.approx(t * perimeter(shape), rel=1e-11)


def test_gradients_match_finite_differences(rng):
    shape = random_shape(rng, 3, 4, 0.2)
    k, e = 7, 1e-6
    c = np.array(shape.coeffs)
    c[k] += e
    up = shape.with_coeffs(c)
    c[k] -= 2 * e
    dn = shape.with_coeffs(c)
    assert perimeter_gradient(shape)[k] == pytest.approx((perimeter(up) - perimeter(dn)) / (2 * e), rel=1e-6)
    assert volume_gradient(shape)[k] == pytest.approx((volume(up) - volume(dn)) / (2 * e), rel=1e-6)


def test_symmetric_difference_matches_shapely(rng):
    a = random_shape(rng, 2, 6, 0.15)
    b = random_shape(rng, 2, 6, 0.15)
    pa, pb = Polygon(polygon_of(a)), Polygon(polygon_of(b))
    assert symmetric_difference(a, b) == pytest.approx(pa.symmetric_difference(pb).area, rel=1e-6)
    assert symmetric_difference(ball(2, 4, 1.1), ball(2, 4)) == pytest.approx(0.21 * math.pi, rel=1e-12)


def test_symmetric_difference_3d_concentric():
    assert symmetric_difference(ball(3, 4, 1.1), ball(3, 4)) == pytest.approx((1.331 - 1) * 4 * math.pi / 3, rel=1e-10)


def test_hausdorff_examples():
    assert hausdorff_distance(ball(2, 4, 1.1), ball(2, 4)) == pytest.approx(0.1, abs=1e-9)
    assert hausdorff_distance(ball(3, 4, 0.8), ball(3, 4)) == pytest.approx(0.2, abs=1e-9)
    s = shape_from_modes(2, 6, {(3, 3): 0.05})
    assert hausdorff_distance(s, s) == 0.0


def test_shape_file_roundtrip(tmp_path, rng):
    shape = random_shape(rng, 3, 4, 0.1)
    path = tmp_path / "k.shape"
    write_shape(path, shape)
    assert path.read_text().startswith("#shape v1\n")
    back = read_shape(path)
    assert back.dim == 3 and np.array_equal(back.coeffs, shape.coeffs)
    path.write_text("#shape v0\n{}")
    with pytest.raises(ValueError):
        read_shape(path)


def test_non_star_shaped_rejected():
    bad = ball(2, 4, radius=-0.5)
    with pytest.raises(NotStarShapedError):
        volume(bad)
    with pytest.raises(ValueError):
        RadialShape(2, np.zeros(4))
