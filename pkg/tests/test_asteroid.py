import numpy as np
import pytest
from hypothesis import given, strategies as st

from ucmpc.asteroid import (GravityError, GravityField, asteroid_true_dynamics,
                            closest_point_on_ellipsoid, ellipsoid_halfspace, ellipsoid_stokes,
                            gravity_accel, gravity_potential, linearize_at, pyramid_rows)

MU = 4.46e-4
coord = st.floats(-60, 60)


def _far(p):
    return np.linalg.norm(p) > 25


@given(coord, coord, coord)
def test_point_mass_matches_newton(x, y, z):
    p = np.array([x, y, z])
    if np.linalg.norm(p) < 1:
        return
    f = GravityField.point_mass(MU, R0=10.0)
    r = np.linalg.norm(p)
    assert np.allclose(gravity_accel(f, p), -MU * p / r ** 3, rtol=1e-12)
    assert gravity_potential(f, p) == pytest.approx(-MU / r, rel=1e-12)


@given(coord, coord, coord)
def test_accel_is_minus_potential_gradient(x, y, z):
    p = np.array([x, y, z])
    if not _far(p):
        return
    f = GravityField.ellipsoid(17.0, 5.5, 5.5, MU)
    h = 1e-3 * np.linalg.norm(p)
    grad = np.zeros(3)
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        # fourth-order central stencil
        grad[i] = (-gravity_potential(f, p + 2 * e) + 8 * gravity_potential(f, p + e)
                   - 8 * gravity_potential(f, p - e) + gravity_potential(f, p - 2 * e)) / (12 * h)
    assert np.allclose(gravity_accel(f, p), -grad, rtol=1e-6, atol=1e-12 * MU)


def _ellipsoid_quadrature(a, b, c, p, n=24):
    """Direct volume integral of a uniform ellipsoid (Gauss-Legendre in scaled spherical coords)."""
    r, wr = np.polynomial.legendre.leggauss(n)
    r, wr = 0.5 * (r + 1), 0.5 * wr
    th, wt = np.polynomial.legendre.leggauss(n)
    th, wt = 0.5 * np.pi * (th + 1), 0.5 * np.pi * wt
    ph = np.linspace(0, 2 * np.pi, 2 * n, endpoint=False)
    wp = np.full(ph.size, 2 * np.pi / ph.size)
    R, TH, PH = np.meshgrid(r, th, ph, indexing="ij")
    W = np.einsum("i,j,k->ijk", wr, wt, wp) * R ** 2 * np.sin(TH)
    q = np.stack([a * R * np.sin(TH) * np.cos(PH), b * R * np.sin(TH) * np.sin(PH), c * R * np.cos(TH)], -1)
    d = q - p
    k = W / np.linalg.norm(d, axis=-1) ** 3
    vol = 4.0 / 3.0 * np.pi
    return MU / vol * np.einsum("ijk,ijkl->l", k, d)


@pytest.mark.parametrize("p", [[60.0, 0.0, 0.0], [30.0, 35.0, 10.0], [0.0, 0.0, 45.0], [-20.0, 30.0, -25.0]])
def test_ellipsoid_field_against_volume_integral(p):
    a, b, c = 17.0, 5.5, 5.5
    p = np.array(p)
    ref = _ellipsoid_quadrature(a, b, c, p)
    f = GravityField.ellipsoid(a, b, c, MU)
    pm = GravityField.point_mass(MU)
    got = gravity_accel(f, p)
    # total field to the degree-6 truncation, and the non-spherical part to a few percent
    assert np.linalg.norm(got - ref) <= 1e-3 * np.linalg.norm(ref)
    pert_ref = ref - gravity_accel(pm, p)
    assert np.linalg.norm(got - gravity_accel(pm, p) - pert_ref) <= 0.05 * np.linalg.norm(pert_ref)


def test_stokes_sphere_and_symmetry():
    C = ellipsoid_stokes(5.0, 5.0, 5.0, 5.0)
    assert C[0, 0] == 1.0 and np.allclose(C[1:], 0.0)
    C = ellipsoid_stokes(20.0, 5.0, 5.0, 10.0)
    assert C[2, 0] < 0 and C[2, 2] > 0
    with pytest.raises(GravityError):
        ellipsoid_stokes(1.0, 2.0, 3.0, 1.0)


def test_jacobi_integral_conserved():
    f = GravityField.ellipsoid(17.0, 5.5, 5.5, MU, n_spin=3.3118e-4)
    s = np.array([30.0, 5.0, 2.0, 0.0, 0.004, 0.0])
    n = f.n_spin

    def jac(s):
        p, v = s[:3], s[3:]
        return 0.5 * v @ v + gravity_potential(f, p) - 0.5 * n * n * (p[0] ** 2 + p[1] ** 2)

    J0 = jac(s)
    dt = 5.0
    rhs = lambda s: asteroid_true_dynamics(f, s, np.zeros(3))
    for _ in range(400):
        k1 = rhs(s); k2 = rhs(s + dt / 2 * k1); k3 = rhs(s + dt / 2 * k2); k4 = rhs(s + dt * k3)
        s = s + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    assert abs(jac(s) - J0) <= 1e-8 * abs(J0)


def test_linearisation_hover():
    f = GravityField.ellipsoid(20.0, 5.0, 5.0, 4.1e-4, n_spin=3.3118e-4)
    X0 = np.array([5.86, 5.21, 1.54, 0, 0, 0])
    A, B, U0 = linearize_at(f, X0)
    assert np.allclose(asteroid_true_dynamics(f, X0, U0), 0.0, atol=1e-15)
    d = np.array([1e-3, -2e-3, 1e-3, 1e-5, 0, -1e-5])
    # the linearisation residual is second order in the offset
    res = [np.linalg.norm(asteroid_true_dynamics(f, X0 + s * d, U0) - A @ (s * d)) for s in (1.0, 0.1)]
    assert res[1] < res[0] / 50
    assert res[0] < 1e-2 * np.linalg.norm(A @ d)
    with pytest.raises(ValueError):
        linearize_at(f, X0 + np.array([0, 0, 0, 1e-3, 0, 0]))


@given(coord, coord, coord)
def test_closest_point_on_ellipsoid(x, y, z):
    p = np.array([x, y, z])
    axes = np.array([20.0, 12.0, 7.5])
    if np.sum((p / axes) ** 2) < 1.05:
        return
    n, q = ellipsoid_halfspace(p, axes)
    assert np.sum((q / axes) ** 2) == pytest.approx(1.0, abs=1e-9)
    # p - q is along the outward normal
    d = p - q
    assert np.allclose(np.cross(d / np.linalg.norm(d), n), 0.0, atol=1e-6)
    assert n @ d > 0


def test_pyramid_contains_axis_and_excludes_outside():
    apex, axis = np.array([1.0, 2.0, 3.0]), np.array([0.0, 0.6, 0.8])
    G, h = pyramid_rows(apex, axis, 30.0)
    assert np.all(G @ (apex + 2.0 * axis) <= h)
    assert np.all(G @ apex <= h + 1e-12)
    side = np.cross(axis, [1.0, 0.0, 0.0])
    side /= np.linalg.norm(side)
    assert np.any(G @ (apex + axis + 2.0 * side) > h)
    assert np.any(G @ (apex - axis) > h)
