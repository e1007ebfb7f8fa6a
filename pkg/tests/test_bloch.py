from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from qidkit.bloch import (
    AxisPolar, Z_UP, axis_to_polar, compose_axis, equatorial_prep, generator_matrix,
    polar_to_cartesian, rotate, rotation_matrix, wrap_angle, z_equatorial,
    z_equatorial_coeffs, z_free,
)
from qidkit.errors import TiltOutOfRange, ZeroAxis

D0 = np.array([0.2, 0.0, 0.1])


def series_expm(a: np.ndarray) -> np.ndarray:
    """Truncated Taylor series with scaling and squaring."""
    norm = np.abs(a).sum(axis=1).max()
    k = max(0, int(math.ceil(math.log2(norm))) + 1) if norm > 0 else 0
    b = a / 2**k
    out = np.eye(3)
    term = np.eye(3)
    for n in range(1, 25):
        term = term @ b / n
        out = out + term
    for _ in range(k):
        out = out @ out
    return out


finite = st.floats(-3, 3, allow_nan=False)
vectors = st.tuples(finite, finite, finite).filter(lambda v: np.linalg.norm(v) > 1e-3)
angles = st.floats(-10, 10, allow_nan=False)


def test_compose_axis_examples():
    np.testing.assert_allclose(compose_axis(D0, [(0.5, (0.2, 0, 0.9))]), [0.3, 0, 0.55], atol=1e-15)
    np.testing.assert_allclose(compose_axis(D0, []), D0)
    np.testing.assert_allclose(compose_axis(D0, [(0.5, (1, 0.9, 0.1))]), [0.7, 0.45, 0.15], atol=1e-15)


@pytest.mark.parametrize("d, norm, theta, phi", [
    ((0.2, 0, 0.1), 0.223607, 1.107149, 0.0),
    ((0, 0, 1), 1.0, 0.0, 0.0),
    ((0.7, 0.45, 0.15), 0.845577, 1.392459, 0.571337),
    ((0.3, 0, 0.55), 0.626498, 0.499347, 0.0),
])
def test_axis_to_polar_examples(d, norm, theta, phi):
    p = axis_to_polar(d)
    assert p.norm == pytest.approx(norm, abs=1e-6)
    assert p.theta == pytest.approx(theta, abs=1e-6)
    assert p.phi == pytest.approx(phi, abs=1e-6)
    # independent oracle
    n = math.sqrt(sum(c * c for c in d))
    assert p.theta == pytest.approx(math.acos(d[2] / n), abs=1e-15)


def test_zero_axis_rejected():
    with pytest.raises(ZeroAxis):
        axis_to_polar((0, 0, 0))
    with pytest.raises(ZeroAxis):
        rotate(Z_UP, (0, 0, 0), 1.0)
    assert not AxisPolar(0.0).defined


@given(vectors)
def test_polar_round_trip(d):
    np.testing.assert_allclose(polar_to_cartesian(axis_to_polar(d)), d, atol=1e-12)


def test_rotate_examples():
    np.testing.assert_allclose(rotate(Z_UP, (0, 0, 5), 1.234), Z_UP, atol=1e-15)
    np.testing.assert_allclose(rotate(Z_UP, (0.3, -1, 2), 0.0), Z_UP, atol=1e-15)
    assert abs(rotate(Z_UP, D0, 1.823477)[2]) < 1e-6
    assert abs(rotate(Z_UP, D0, math.acos(-0.25))[2]) < 1e-12


def test_generator_layout():
    np.testing.assert_array_equal(generator_matrix((0, 0, 0)), np.zeros((3, 3)))
    g = generator_matrix((1.5, -2.0, 0.25))
    np.testing.assert_array_equal(g[0], [0, 0.25, 2.0])
    np.testing.assert_array_equal(g, -g.T)
    s = np.array([0.3, 0.1, -0.7])
    np.testing.assert_allclose(g @ s, np.cross(s, (1.5, -2.0, 0.25)))


def test_rotation_matrix_examples():
    np.testing.assert_allclose(rotation_matrix((1, 2, 3), 0.0), np.eye(3), atol=1e-15)
    v = rotation_matrix((0, 0, 1), math.pi / 2) @ np.array([1.0, 0, 0])
    assert v[2] == pytest.approx(0.0, abs=1e-15)
    assert np.linalg.norm(v) == pytest.approx(1.0)
    # ds/dt = s x d about +z turns +x toward -y
    np.testing.assert_allclose(v, [0, -1, 0], atol=1e-15)


def test_expm_oracles_agree_with_rotation():
    rng = np.random.default_rng(7)
    for _ in range(200):
        d = rng.normal(size=3)
        t = rng.uniform(-5, 5)
        g = generator_matrix(d) * t
        r = rotation_matrix(d, np.linalg.norm(d) * t)
        np.testing.assert_allclose(series_expm(g), r, atol=1e-9)
        np.testing.assert_allclose(expm(g), r, atol=1e-9)
        s = rng.normal(size=3)
        np.testing.assert_allclose(r @ s, rotate(s, d, np.linalg.norm(d) * t), atol=1e-12)


@settings(max_examples=300)
@given(vectors, vectors, angles)
def test_rotate_preserves_norm(s, d, a):
    assert np.linalg.norm(rotate(s, d, a)) == pytest.approx(np.linalg.norm(s), rel=1e-12)


def test_rotate_preserves_norm_bulk():
    rng = np.random.default_rng(11)
    for _ in range(10_000):
        s = rng.normal(size=3)
        s /= np.linalg.norm(s)
        out = rotate(s, rng.normal(size=3), rng.uniform(-20, 20))
        assert abs(np.linalg.norm(out) - 1.0) < 1e-12


@given(vectors, vectors, angles, angles)
def test_group_property(s, d, a1, a2):
    np.testing.assert_allclose(rotate(rotate(s, d, a1), d, a2), rotate(s, d, a1 + a2), atol=1e-11)


@given(vectors, angles)
def test_period(d, a):
    np.testing.assert_allclose(rotate(Z_UP, d, a + 2 * math.pi), rotate(Z_UP, d, a), atol=1e-11)


@pytest.mark.parametrize("theta, alpha, z", [
    (0.0, 2.3, 1.0),
    (1.107149, math.pi, -0.6),
    (math.pi / 2, math.pi / 2, 0.0),
])
def test_z_free_examples(theta, alpha, z):
    assert z_free(theta, alpha) == pytest.approx(z, abs=1e-6)


def test_z_free_minimum_is_cos_2theta():
    for theta in np.linspace(0, math.pi, 37):
        assert z_free(theta, math.pi) == pytest.approx(math.cos(2 * theta), abs=1e-15)


def _prepared(beta):
    return np.array([math.cos(beta), math.sin(beta), 0.0])


def test_z_equatorial_examples():
    assert z_equatorial(0.7, 0.3, -1.0, 0.0) == 0.0
    theta, beta = 0.498686, -math.pi / 3
    expected = math.sin(2 * theta) * math.cos(beta)  # 0.420024
    c, _ = z_equatorial_coeffs(theta, 0.0, beta)
    assert 2 * c == pytest.approx(expected, abs=1e-12)
    assert z_equatorial(theta, 0.0, beta, math.pi) == pytest.approx(expected, abs=1e-12)
    direct = rotate(_prepared(beta), polar_to_cartesian(AxisPolar(1.0, theta, 0.0)), math.pi)
    assert direct[2] == pytest.approx(expected, abs=1e-12)


@settings(max_examples=300)
@given(st.floats(0, math.pi), st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi), angles)
def test_closed_forms_match_rotation(theta, phi, beta, alpha):
    axis = polar_to_cartesian(AxisPolar(1.0, theta, phi))
    assert z_free(theta, alpha) == pytest.approx(rotate(Z_UP, axis, alpha)[2], abs=1e-12)
    ref = rotate(_prepared(beta), axis, alpha)[2]
    assert z_equatorial(theta, phi, beta, alpha) == pytest.approx(ref, abs=1e-12)


def test_equatorial_prep_examples():
    p = equatorial_prep(AxisPolar(1.0, math.pi / 2, 0.0))
    assert p.alpha_r == pytest.approx(math.pi / 2, abs=1e-15)
    assert abs(rotate(Z_UP, (1, 0, 0), p.alpha_r)[2]) < 1e-15

    ref = axis_to_polar(D0)
    p = equatorial_prep(ref)
    assert p.alpha_r == pytest.approx(1.823477, abs=1e-6)
    assert abs(p.beta) == pytest.approx(math.pi / 3, abs=1e-9)
    assert p.duration == pytest.approx(p.alpha_r / ref.norm)
    with pytest.raises(TiltOutOfRange):
        equatorial_prep(AxisPolar(1.0, 0.1, 0.0))


@given(st.floats(math.pi / 4, 3 * math.pi / 4), st.floats(-math.pi, math.pi), st.floats(0.1, 5))
def test_equatorial_prep_lands_on_equator(theta, phi, norm):
    ref = AxisPolar(norm, theta, phi)
    p = equatorial_prep(ref)
    s1 = rotate(Z_UP, polar_to_cartesian(ref), p.alpha_r)
    assert abs(s1[2]) < 1e-9
    assert wrap_angle(math.atan2(s1[1], s1[0]) - p.beta) == pytest.approx(0.0, abs=1e-9)


@given(st.floats(-50, 50))
def test_wrap_angle_range(x):
    y = wrap_angle(x)
    assert -math.pi < y <= math.pi
    assert math.cos(y) == pytest.approx(math.cos(x), abs=1e-9)
