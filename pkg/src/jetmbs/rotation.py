"""Euler-parameter algebra.

Orientation of a rigid body is carried by a unit 4-vector ``theta`` on S^3
(``theta`` and ``-theta`` give the same rotation).  Everything here is built
from two 3x4 matrices ``H(theta)`` and ``Htilde(theta)`` which are linear in
``theta``; the rotation matrix is ``R = Htilde @ H.T``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

UNIT_TOL = 1e-6


@dataclass(frozen=True)
class EulerState:
    """Euler parameters and their time derivative for one body."""

    theta: np.ndarray
    theta1: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float).reshape(4))
        object.__setattr__(self, "theta1", np.asarray(self.theta1, dtype=float).reshape(4))

    def defects(self) -> tuple[float, float]:
        """Return ``(|theta|^2 - 1, <theta, theta1>)``."""
        return float(self.theta @ self.theta - 1.0), float(self.theta @ self.theta1)


@dataclass(frozen=True)
class HPair:
    H: np.ndarray
    Htilde: np.ndarray


def h_matrix(v) -> np.ndarray:
    v0, v1, v2, v3 = v
    return np.array([
        [-v1, v0, v3, -v2],
        [-v2, -v3, v0, v1],
        [-v3, v2, -v1, v0],
    ])


def htilde_matrix(v) -> np.ndarray:
    v0, v1, v2, v3 = v
    return np.array([
        [-v1, v0, -v3, v2],
        [-v2, v3, v0, -v1],
        [-v3, -v2, v1, v0],
    ])


def h_matrices(theta) -> HPair:
    """Both 3x4 matrices at ``theta``.  Defined (and linear) for any 4-vector."""
    theta = np.asarray(theta, dtype=float)
    return HPair(H=h_matrix(theta), Htilde=htilde_matrix(theta))


# H(theta) = sum_k theta_k * H_BASIS[k], same for Htilde.
H_BASIS = np.array([h_matrix(e) for e in np.eye(4)])
HTILDE_BASIS = np.array([htilde_matrix(e) for e in np.eye(4)])


def explicit_rotation(theta) -> np.ndarray:
    """Quadratic rotation formula evaluated without any normalisation check.

    Off the unit sphere this equals ``Htilde H^T + (|theta|^2 - 1) I``; the
    constraint code differentiates exactly this polynomial.
    """
    t0, t1, t2, t3 = theta
    return 2.0 * np.array([
        [t0 * t0 + t1 * t1 - 0.5, t1 * t2 - t0 * t3, t1 * t3 + t0 * t2],
        [t1 * t2 + t0 * t3, t0 * t0 + t2 * t2 - 0.5, t2 * t3 - t0 * t1],
        [t1 * t3 - t0 * t2, t2 * t3 + t0 * t1, t0 * t0 + t3 * t3 - 0.5],
    ])


def rotation_matrix(theta) -> np.ndarray:
    """Rotation matrix of unit Euler parameters.

    Raises
    ------
    ValueError
        If ``|theta|`` deviates from one by more than ``1e-6``.
    """
    theta = np.asarray(theta, dtype=float)
    if abs(np.linalg.norm(theta) - 1.0) > UNIT_TOL:
        raise ValueError(f"Euler parameters must be unit length, got |theta| = {np.linalg.norm(theta):.3e}")
    return explicit_rotation(theta)


def rotation_tensor(c) -> np.ndarray:
    """Symmetric 3x4x4 tensor ``T`` with ``explicit_rotation(theta) @ c == T(theta, theta) - c``.

    ``T @ theta`` is half the Jacobian of ``theta -> R(theta) c`` and
    ``2 * (T @ v) @ v`` its second differential in direction ``v``.
    """
    c = np.asarray(c, dtype=float)
    # Htilde_k H_l^T c for all k, l
    A = np.einsum("kij,lmj,m->ikl", HTILDE_BASIS, H_BASIS, c)
    return 0.5 * (A + A.transpose(0, 2, 1)) + np.einsum("i,kl->ikl", c, np.eye(4))


def hat(w) -> np.ndarray:
    w1, w2, w3 = w
    return np.array([
        [0.0, -w3, w2],
        [w3, 0.0, -w1],
        [-w2, w1, 0.0],
    ])


def vee(A) -> np.ndarray:
    return np.array([A[2, 1], A[0, 2], A[1, 0]])


def body_angular_velocity(state: EulerState) -> np.ndarray:
    """Body-frame angular velocity ``2 H(theta) theta1``."""
    return 2.0 * h_matrix(state.theta) @ state.theta1


def spatial_angular_velocity(state: EulerState) -> np.ndarray:
    """Spatial angular velocity ``2 Htilde(theta) theta1`` (equals ``R @ Omega``)."""
    return 2.0 * htilde_matrix(state.theta) @ state.theta1


def theta_from_planar_angle(beta: float) -> np.ndarray:
    return np.array([np.cos(0.5 * beta), 0.0, 0.0, np.sin(0.5 * beta)])
