import warnings

import numpy as np
import pytest
from hypothesis import given

from conftest import checked, fd_jacobian, unit_quaternions, vec
from jetmbs.constraints import (
    ConstraintPrimitive,
    ConstraintSet,
    DegenerateGeometryWarning,
    make_joint,
)
from jetmbs.models import load_model
from jetmbs.rotation import rotation_matrix

E1, E2, E3 = np.eye(3)
SQ = np.sqrt(0.5)


def random_set():
    prims = (make_joint("revolute", 0, 1, chi_j=[-1, 0, 0], a_i=E2, b_i=E1, a_j=E3)
             + make_joint("cylindrical", 1, 2, chi_i=[1, 0.2, 0], chi_j=[-0.5, 0, 0.1], a_i=E1, b_i=E2, a_j=E3)
             + make_joint("translational", 2, 3, chi_i=[0.3, 0, 0], a_i=E2, b_i=E3, a_j=E1, b_j=E3))
    return ConstraintSet(prims, 3)


def config(thetas, rs):
    return np.concatenate([np.r_[r, th] for r, th in zip(rs, thetas)])


def c_residual(y, p):
    """Coincidence rows straight from rotation matrices."""
    def frame(b):
        if b == 0:
            return np.zeros(3), np.eye(3)
        k = 7 * (b - 1)
        return y[k:k + 3], rotation_matrix(y[k + 3:k + 7] / np.linalg.norm(y[k + 3:k + 7]))
    ri, Ri = frame(p.body_i)
    rj, Rj = frame(p.body_j)
    return rj + Rj @ p.chi_j - ri - Ri @ p.chi_i


@pytest.mark.parametrize("kind, n", [("spherical", 3), ("universal", 4), ("revolute", 5),
                                     ("cylindrical", 4), ("translational", 5)])
def test_joint_row_counts(kind, n):
    prims = make_joint(kind, 0, 1, a_i=E1, b_i=E2, a_j=E3, b_j=E1)
    assert sum(p.size for p in prims) == n


def test_translational_composition():
    kinds = [p.kind for p in make_joint("translational", 1, 2, a_i=E1, b_i=E2, a_j=E3, b_j=E1)]
    assert kinds == ["SO", "SO", "SO", "O", "O"]


@pytest.mark.parametrize("name", ["quadrangle", "crank"])
def test_model_row_totals(name):
    assert checked(name)[0].mechanism().constraints.ell == 17


def test_joint_validation():
    with pytest.raises(ValueError, match="unknown joint"):
        make_joint("ball", 0, 1)
    with pytest.raises(ValueError, match="a_j"):
        make_joint("universal", 0, 1, a_i=E1)
    with pytest.raises(ValueError):
        ConstraintPrimitive("SO", 0, 1, a_i=E1, a_j=[1, 1, 0])
    with pytest.raises(ValueError):
        ConstraintPrimitive("C", 1, 1)
    with pytest.raises(ValueError):
        ConstraintSet(make_joint("spherical", 0, 3), 2)


def test_pendulum_initial_residual():
    cons = load_model("pendulum").mechanism().constraints
    y = np.r_[0.765, 0, 0, 1, 0, 0, 0]
    np.testing.assert_array_equal(cons.residual(y), 0)
    assert np.linalg.matrix_rank(cons.jacobian(y)) == 3


def test_so_identity_frames():
    cons = ConstraintSet([ConstraintPrimitive("SO", 1, 2, a_i=E1, a_j=E2)], 2)
    assert cons.residual(config([[1, 0, 0, 0]] * 2, [np.zeros(3), np.ones(3)]))[0] == 0


def test_quadrangle_table_data_nearly_consistent():
    spec = load_model("quadrangle")
    cons = spec.mechanism().constraints
    y = spec.initial_jet().y.copy()
    # the tabulated Euler parameters are rounded off the unit sphere
    for s in cons.theta_slices:
        y[s] /= np.linalg.norm(y[s])
    assert np.abs(cons.residual(y)).max() < 2e-3


@given(unit_quaternions(), unit_quaternions(), vec(3), vec(3))
def test_c_rows_match_rotation_oracle(t1, t2, r1, r2):
    p = ConstraintPrimitive("C", 1, 2, chi_i=[0.3, -0.1, 0.2], chi_j=[-1, 0.5, 0])
    y = config([t1, t2], [r1, r2])
    np.testing.assert_allclose(ConstraintSet([p], 2).residual(y), c_residual(y, p), atol=1e-12)


@given(unit_quaternions(), unit_quaternions(), vec(3), vec(3))
def test_c_jacobian_translation_blocks(t1, t2, r1, r2):
    dg = ConstraintSet([ConstraintPrimitive("C", 1, 2)], 2).jacobian(config([t1, t2], [r1, r2]))
    np.testing.assert_array_equal(dg[:, 0:3], -np.eye(3))
    np.testing.assert_array_equal(dg[:, 7:10], np.eye(3))


@given(unit_quaternions(), unit_quaternions(), unit_quaternions(), vec(21), vec(3))
def test_differentials_match_fd(t1, t2, t3, v, shift):
    cons = random_set()
    y = config([t1, t2, t3], [np.array([0.2, 0.1, 0]), np.array([1, -0.3, 0.5]), np.array([0.4, 0.4, 1.0])])
    dg = cons.jacobian(y)
    scale = np.abs(dg).max()
    np.testing.assert_allclose(dg, fd_jacobian(cons.residual, y), atol=1e-6 * scale)
    # d2g(v, .) rows are the derivative of dg v along v
    rows = cons.second_differential_rows(y, v)
    np.testing.assert_allclose(rows @ v, fd_jacobian(lambda q: cons.jacobian(q) @ v, y) @ v, atol=1e-6 * scale)
    np.testing.assert_allclose(cons.second_differential(y, v), rows @ v, atol=1e-12)
    w = np.linspace(-1, 1, cons.ell)
    np.testing.assert_allclose(cons.weighted_hessian(y, w), fd_jacobian(lambda q: w @ cons.jacobian(q), y),
                               atol=1e-6 * scale)
    np.testing.assert_allclose(cons.second_differential_directional(y, v, w), w @ rows, atol=1e-12)
    assert not cons.second_differential(y, np.zeros(21)).any()


@given(unit_quaternions(), vec(7), vec(7))
def test_c_second_differential_constant(th, v, dy):
    cons = ConstraintSet(make_joint("spherical", 0, 1, chi_j=[-1, 0.5, 0.2]), 1)
    y = np.r_[0.1, 0.2, 0.3, th]
    np.testing.assert_allclose(cons.second_differential(y, v), cons.second_differential(y + dy, v), atol=1e-12)


@given(unit_quaternions(), vec(7))
def test_so_against_ground_is_theta_quadratic(th, v):
    cons = ConstraintSet([ConstraintPrimitive("SO", 1, 0, a_i=E1, a_j=E3)], 1)
    y = np.r_[0.3, 0.2, 0.1, th]
    f = lambda q: cons.residual(q)[0]
    # g(y + s v) is quadratic in s: d2g(v, v) is the exact second difference
    exact = f(y + v) - 2 * f(y) + f(y - v)
    assert cons.second_differential(y, v)[0] == pytest.approx(exact, abs=1e-12)
    assert cons.second_differential(y, np.r_[v[:3], 0, 0, 0, 0])[0] == 0


@given(unit_quaternions(), unit_quaternions(), vec(3))
def test_rotational_primitives_translation_invariant(t1, t2, shift):
    cons = ConstraintSet([ConstraintPrimitive("SO", 1, 2, a_i=E1, a_j=E2)], 2)
    y = config([t1, t2], [np.zeros(3), np.ones(3)])
    y2 = config([t1, t2], [shift, np.ones(3) + shift])
    assert cons.residual(y)[0] == pytest.approx(cons.residual(y2)[0], abs=1e-14)


def test_o_degeneracy_warning():
    cons = ConstraintSet(make_joint("cylindrical", 0, 1, a_i=E1, b_i=E2, a_j=E3), 1)
    y = np.r_[0, 0, 0, 1, 0, 0, 0]
    with pytest.warns(DegenerateGeometryWarning):
        assert cons.check_geometry(y) == [2, 3]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert cons.check_geometry(np.r_[1, 0, 0, 1, 0, 0, 0]) == []
