import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from ucmpc.linalg import (Box, LtiPlant, box_pontryagin_diff, decompose_uncertainty,
                          integrated_exponential, is_hurwitz, null_space_basis, pseudo_inverse)

finite = st.floats(-5, 5, allow_nan=False)


def test_integrated_exponential_diagonal():
    a, T = np.array([1.0, 3.0, 10.0]), 0.7
    expect = np.diag((1 - np.exp(-a * T)) / a)
    assert np.allclose(integrated_exponential(np.diag(-a), T), expect, atol=1e-14)


def test_integrated_exponential_singular_A():
    # A nilpotent: int_0^t (I + A s) ds = t I + A t^2 / 2
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    assert np.allclose(integrated_exponential(A, 2.0), [[2.0, 2.0], [0.0, 2.0]])


@given(arrays(float, (3, 3), elements=finite), st.floats(0.01, 1.0))
def test_integrated_exponential_derivative(A, t):
    # d/dt Phi(t) = e^{At}
    h = 1e-6
    d = (integrated_exponential(A, t + h) - integrated_exponential(A, t - h)) / (2 * h)
    assert np.allclose(d, sla.expm(A * t), rtol=1e-5, atol=1e-5)


@given(arrays(float, (4, 2), elements=finite))
def test_pseudo_inverse_is_left_inverse(B):
    if np.linalg.matrix_rank(B) < 2 or np.linalg.cond(B) > 1e6:
        return
    assert np.allclose(pseudo_inverse(B) @ B, np.eye(2), atol=1e-8)
    N = null_space_basis(B)
    assert N.shape == (4, 2)
    assert np.allclose(N.T @ B, 0, atol=1e-9)


def test_plant_checks():
    with pytest.raises(ValueError):
        LtiPlant([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], [[1.0], [1.0]])
    with pytest.raises(ValueError):
        LtiPlant([[0.0, 1.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]], np.zeros((2, 0)))
    p = LtiPlant.from_B([[0.0, 1.0], [-1.0, -1.0]], [[0.0], [1.0]])
    assert p.Bu.shape == (2, 1) and p.m == 1 and p.n == 2


@given(arrays(float, 3, elements=finite))
def test_decompose_uncertainty_reconstructs(f):
    p = LtiPlant.from_B(np.zeros((3, 3)), [[1.0], [2.0], [0.5]])
    fm, fu = decompose_uncertainty(f, p)
    assert np.allclose(p.B @ fm + p.Bu @ fu, f)
    # orthogonal complement: the matched part is B^dagger f
    assert np.allclose(fm, p.B_dagger @ f)


def test_is_hurwitz():
    assert is_hurwitz([[-1.0, 5.0], [0.0, -0.1]])
    assert not is_hurwitz([[0.0, 1.0], [0.0, 0.0]])


@given(arrays(float, 3, elements=st.floats(0.5, 5)), arrays(float, 3, elements=st.floats(0, 0.4)))
def test_pontryagin_diff_property(r, d):
    X, D = Box.symmetric(r), Box.symmetric(d)
    Xn = box_pontryagin_diff(X, D)
    # every point of Xn plus every point of D stays in X
    for v in Xn.vertices():
        for w in D.vertices():
            assert X.contains(v + w, tol=1e-12)


def test_box_basics():
    b = Box([-1.0, 0.0], [2.0, 3.0])
    assert np.allclose(b.halfwidth, [1.5, 1.5]) and b.max_norm() == 3.0
    assert Box([1.0], [0.0]).empty and Box([1.0], [0.0]).empty_axes() == [0]
    c = Box.from_dict(b.to_dict())
    assert np.array_equal(c.lo, b.lo) and np.array_equal(c.hi, b.hi)
    with pytest.raises(ValueError):
        box_pontryagin_diff(b, Box([0.5], [1.0]))
