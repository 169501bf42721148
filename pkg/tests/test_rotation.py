import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import euler_states, unit_quaternions, vec
from jetmbs.rotation import (
    EulerState,
    body_angular_velocity,
    explicit_rotation,
    h_matrices,
    h_matrix,
    hat,
    htilde_matrix,
    rotation_matrix,
    spatial_angular_velocity,
    theta_from_planar_angle,
    vee,
)

TOL = 1e-12


def quat_rotation(q):
    """Rodrigues form of the rotation of a unit quaternion (independent oracle)."""
    w, v = q[0], q[1:]
    return (w * w - v @ v) * np.eye(3) + 2 * np.outer(v, v) + 2 * w * hat(v)


def test_identity_rows():
    hp = h_matrices([1.0, 0.0, 0.0, 0.0])
    np.testing.assert_array_equal(hp.Htilde[0], [0, 1, 0, 0])
    np.testing.assert_array_equal(hp.H[0], [0, 1, 0, 0])
    np.testing.assert_array_equal(rotation_matrix([1, 0, 0, 0]), np.eye(3))


def test_zero_is_zero():
    hp = h_matrices(np.zeros(4))
    assert not hp.H.any() and not hp.Htilde.any()


def test_quarter_turn_about_e2():
    s = np.sqrt(2) / 2
    R = rotation_matrix([s, 0, s, 0])
    np.testing.assert_allclose(R, [[0, 0, 1], [0, 1, 0], [-1, 0, 0]], atol=1e-15)


def test_rejects_non_unit():
    with pytest.raises(ValueError):
        rotation_matrix([1.0, 1e-2, 0, 0])


def test_unit_omega_example():
    st_ = EulerState([1, 0, 0, 0], [0, 0, 0, 0.5])
    np.testing.assert_allclose(body_angular_velocity(st_), [0, 0, 1])
    assert not body_angular_velocity(EulerState([1, 0, 0, 0], np.zeros(4))).any()


@given(vec(4), vec(4))
def test_linearity(v, w):
    a, b, c = h_matrices(v + w), h_matrices(v), h_matrices(w)
    np.testing.assert_allclose(a.H, b.H + c.H, atol=1e-14)
    np.testing.assert_allclose(a.Htilde, b.Htilde + c.Htilde, atol=1e-14)


@settings(max_examples=1000)
@given(euler_states(), vec(4), vec(4))
def test_rotation_identities(state, v, w):
    th, th1 = state
    H, Ht = h_matrix(th), htilde_matrix(th)
    H1, Ht1 = h_matrix(th1), htilde_matrix(th1)
    P = np.eye(4) - np.outer(th, th)
    np.testing.assert_allclose(Ht.T @ Ht, P, atol=TOL)
    np.testing.assert_allclose(H.T @ H, P, atol=TOL)
    np.testing.assert_allclose(H @ H.T, np.eye(3), atol=TOL)
    np.testing.assert_allclose(Ht @ Ht.T, np.eye(3), atol=TOL)
    np.testing.assert_allclose(Ht1 @ H.T - Ht @ H1.T, 0, atol=TOL)
    np.testing.assert_allclose(H1 @ H.T + H @ H1.T, 0, atol=TOL)
    np.testing.assert_allclose(h_matrix(v) @ w + h_matrix(w) @ v, 0, atol=TOL)
    for x in (H @ th, Ht @ th, H1 @ th1, Ht1 @ th1):
        np.testing.assert_allclose(x, 0, atol=TOL)


@settings(max_examples=1000)
@given(euler_states())
def test_angular_velocity_identity(state):
    th, th1 = state
    es = EulerState(th, th1)
    R = rotation_matrix(th)
    Omega = body_angular_velocity(es)
    np.testing.assert_allclose(R @ Omega, spatial_angular_velocity(es), atol=TOL)
    # Omega^ = R^T R1 = 2 H H1^T
    R1 = (htilde_matrix(th1) @ h_matrix(th).T + htilde_matrix(th) @ h_matrix(th1).T)
    np.testing.assert_allclose(R.T @ R1, hat(Omega), atol=1e-11)
    np.testing.assert_allclose(2 * h_matrix(th) @ h_matrix(th1).T, hat(2 * h_matrix(th) @ th1), atol=TOL)


@given(unit_quaternions())
def test_rotation_matrix_in_so3(th):
    R = rotation_matrix(th)
    np.testing.assert_allclose(R.T @ R, np.eye(3), atol=TOL)
    assert abs(np.linalg.det(R) - 1) < TOL
    np.testing.assert_allclose(R, htilde_matrix(th) @ h_matrix(th).T, atol=TOL)
    np.testing.assert_allclose(R, quat_rotation(th), atol=TOL)
    np.testing.assert_allclose(rotation_matrix(-th), R, atol=TOL)


@given(vec(4))
def test_explicit_form_off_sphere(v):
    ht = htilde_matrix(v) @ h_matrix(v).T
    np.testing.assert_allclose(explicit_rotation(v), ht + (v @ v - 1) * np.eye(3), atol=1e-12)


@given(vec(3), vec(3))
def test_hat_is_cross(w, v):
    np.testing.assert_allclose(hat(w) @ v, np.cross(w, v), atol=1e-14)
    np.testing.assert_array_equal(vee(hat(w)), w)


@given(st.floats(-10, 10))
def test_planar_angle(beta):
    th = theta_from_planar_angle(beta)
    c, s = np.cos(beta), np.sin(beta)
    np.testing.assert_allclose(rotation_matrix(th), [[c, -s, 0], [s, c, 0], [0, 0, 1]], atol=1e-14)
