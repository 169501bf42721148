"""Rigid bodies, jets, forces and the block operators of the dynamics solve."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Protocol, Sequence

import numpy as np

from .rotation import EulerState, H_BASIS, h_matrix

BODY_COORDS = 7   # r (3) + theta (4)
BODY_DOF = 6


@dataclass(frozen=True)
class RigidBody:
    """Mass and body-frame inertia tensor about the centre of mass."""

    mass: float
    inertia: np.ndarray
    label: str = ""

    def __post_init__(self):
        inertia = np.asarray(self.inertia, dtype=float)
        if inertia.shape == (3,):
            inertia = np.diag(inertia)
        if inertia.shape != (3, 3):
            raise ValueError(f"inertia must be 3x3 or a diagonal 3-vector, got shape {inertia.shape}")
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if np.abs(inertia - inertia.T).max() > 1e-12:
            raise ValueError("inertia tensor is not symmetric")
        if np.linalg.eigvalsh(inertia).min() <= 0:
            raise ValueError("inertia tensor is not positive definite")
        object.__setattr__(self, "mass", float(self.mass))
        object.__setattr__(self, "inertia", inertia)


@dataclass(frozen=True)
class SystemJet:
    """Point ``(t, y, y1)`` of the jet space; ``y = (r1, theta1, ..., rn, thetan)``."""

    t: float
    y: np.ndarray
    y1: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float).copy())
        object.__setattr__(self, "y1", np.asarray(self.y1, dtype=float).copy())
        if self.y.shape != self.y1.shape or self.y.ndim != 1:
            raise ValueError("y and y1 must be 1-d arrays of equal length")

    @property
    def n_bodies(self) -> int:
        return self.y.size // BODY_COORDS

    def r(self, i: int) -> np.ndarray:
        return self.y[BODY_COORDS * i:BODY_COORDS * i + 3]

    def theta(self, i: int) -> np.ndarray:
        return self.y[BODY_COORDS * i + 3:BODY_COORDS * (i + 1)]

    def euler_state(self, i: int) -> EulerState:
        s = slice(BODY_COORDS * i + 3, BODY_COORDS * (i + 1))
        return EulerState(self.y[s], self.y1[s])

    def with_values(self, y=None, y1=None, t=None) -> "SystemJet":
        return replace(
            self,
            t=self.t if t is None else t,
            y=self.y if y is None else y,
            y1=self.y1 if y1 is None else y1,
        )


def pack_jet(t: float, rs, thetas, r1s=None, theta1s=None) -> SystemJet:
    """Build a jet from per-body position and Euler-parameter lists."""
    n = len(rs)
    r1s = [np.zeros(3)] * n if r1s is None else r1s
    theta1s = [np.zeros(4)] * n if theta1s is None else theta1s
    y = np.concatenate([np.r_[r, th] for r, th in zip(rs, thetas)])
    y1 = np.concatenate([np.r_[r, th] for r, th in zip(r1s, theta1s)])
    return SystemJet(t, y, y1)


class Potential(Protocol):
    """Extension hook for potentials beyond uniform gravity."""

    def value(self, y: np.ndarray) -> float: ...

    def gradient(self, y: np.ndarray) -> np.ndarray: ...

    def hessian(self, y: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class SpringPotential:
    """Linear spring pulling the centre of mass of ``body`` to ``anchor``."""

    stiffness: float
    body: int = 0
    anchor: tuple = (0.0, 0.0, 0.0)

    def _slice(self):
        return slice(BODY_COORDS * self.body, BODY_COORDS * self.body + 3)

    def value(self, y):
        d = y[self._slice()] - np.asarray(self.anchor)
        return 0.5 * self.stiffness * float(d @ d)

    def gradient(self, y):
        g = np.zeros_like(y)
        g[self._slice()] = self.stiffness * (y[self._slice()] - np.asarray(self.anchor))
        return g

    def hessian(self, y):
        Hs = np.zeros((y.size, y.size))
        s = self._slice()
        Hs[s, s] = self.stiffness * np.eye(3)
        return Hs


@dataclass(frozen=True)
class ForceModel:
    """Uniform gravity, constant body-frame torques and constant spatial forces.

    ``torques`` and ``forces`` are ``(n_bodies, 3)`` arrays (missing means zero).
    """

    gravity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torques: np.ndarray | None = None
    forces: np.ndarray | None = None
    potential: Potential | None = None

    def __post_init__(self):
        object.__setattr__(self, "gravity", np.asarray(self.gravity, dtype=float).reshape(3))
        for name in ("torques", "forces"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.atleast_2d(np.asarray(v, dtype=float)))

    def torque(self, i: int) -> np.ndarray:
        return np.zeros(3) if self.torques is None else self.torques[i]

    def force(self, i: int) -> np.ndarray:
        return np.zeros(3) if self.forces is None else self.forces[i]

    def external_vector(self, n_bodies: int) -> np.ndarray:
        """``F_e = (F1, 2 tau1, ..., Fn, 2 taun)``."""
        return np.concatenate([np.r_[self.force(i), 2.0 * self.torque(i)] for i in range(n_bodies)])

    @property
    def has_loads(self) -> bool:
        return any(v is not None and np.any(v != 0) for v in (self.torques, self.forces))

    def potential_energy(self, bodies: Sequence[RigidBody], y: np.ndarray) -> float:
        U = -sum(b.mass * float(self.gravity @ y[BODY_COORDS * i:BODY_COORDS * i + 3])
                 for i, b in enumerate(bodies))
        if self.potential is not None:
            U += self.potential.value(y)
        return U

    def potential_gradient(self, bodies: Sequence[RigidBody], y: np.ndarray) -> np.ndarray:
        g = np.zeros_like(y)
        for i, b in enumerate(bodies):
            g[BODY_COORDS * i:BODY_COORDS * i + 3] = -b.mass * self.gravity
        if self.potential is not None:
            g = g + self.potential.gradient(y)
        return g

    def potential_hessian(self, bodies: Sequence[RigidBody], y: np.ndarray) -> np.ndarray:
        if self.potential is None:
            return np.zeros((y.size, y.size))
        return self.potential.hessian(y)


def christoffel_map(body: RigidBody, state: EulerState) -> np.ndarray:
    """``K(theta1, theta1) = H H1^T I H theta1`` for one body."""
    H = h_matrix(state.theta)
    H1 = h_matrix(state.theta1)
    return H @ (H1.T @ (body.inertia @ (H @ state.theta1)))


@dataclass(frozen=True)
class BlockOperators:
    """Block-diagonal operators of the dynamics solve (dense, plus the E blocks)."""

    E: np.ndarray
    H: np.ndarray
    I_op: np.ndarray
    Ktilde: np.ndarray
    E_blocks: tuple


def body_mass_block(body: RigidBody) -> np.ndarray:
    E = np.zeros((6, 6))
    E[:3, :3] = body.mass * np.eye(3)
    E[3:, 3:] = 4.0 * body.inertia
    return E


def block_operators(bodies: Sequence[RigidBody], jet: SystemJet) -> BlockOperators:
    n = len(bodies)
    E = np.zeros((BODY_DOF * n, BODY_DOF * n))
    Hop = np.zeros((BODY_DOF * n, BODY_COORDS * n))
    Iop = np.zeros((BODY_COORDS * n, BODY_COORDS * n))
    K = np.zeros(BODY_DOF * n)
    blocks = []
    for i, body in enumerate(bodies):
        a, b = BODY_DOF * i, BODY_COORDS * i
        Eb = body_mass_block(body)
        blocks.append(Eb)
        E[a:a + 6, a:a + 6] = Eb
        state = jet.euler_state(i)
        Hop[a:a + 3, b:b + 3] = np.eye(3)
        Hop[a + 3:a + 6, b + 3:b + 7] = h_matrix(state.theta)
        Iop[b + 3:b + 7, b + 3:b + 7] = (state.theta1 @ state.theta1) * np.eye(4)
        K[a + 3:a + 6] = christoffel_map(body, state)
    return BlockOperators(E=E, H=Hop, I_op=Iop, Ktilde=K, E_blocks=tuple(blocks))


def velocity_map(jet: SystemJet) -> np.ndarray:
    """``Hop @ y1``: per body ``(r1, H theta1)``; the rotational half is ``Omega / 2``."""
    out = np.empty(BODY_DOF * jet.n_bodies)
    for i in range(jet.n_bodies):
        st = jet.euler_state(i)
        out[BODY_DOF * i:BODY_DOF * i + 3] = jet.y1[BODY_COORDS * i:BODY_COORDS * i + 3]
        out[BODY_DOF * i + 3:BODY_DOF * i + 6] = h_matrix(st.theta) @ st.theta1
    return out


def kinetic_energy(bodies: Sequence[RigidBody], jet: SystemJet) -> float:
    v = velocity_map(jet)
    T = 0.0
    for i, body in enumerate(bodies):
        vi = v[BODY_DOF * i:BODY_DOF * (i + 1)]
        T += 0.5 * float(vi @ body_mass_block(body) @ vi)
    return T


def power(bodies: Sequence[RigidBody], jet: SystemJet, force: ForceModel) -> float:
    """Rate of work of the external loads, ``<Hop y1, F_e>``."""
    return float(velocity_map(jet) @ force.external_vector(len(bodies)))


@dataclass(frozen=True)
class Energies:
    T: float
    U: float
    W: float
    W_total: float


def energies(bodies: Sequence[RigidBody], jet: SystemJet, force: ForceModel, w_ext: float = 0.0) -> Energies:
    T = kinetic_energy(bodies, jet)
    U = force.potential_energy(bodies, jet.y)
    return Energies(T=T, U=U, W=T + U, W_total=T + U - w_ext)


def _n_matrix(x: np.ndarray) -> np.ndarray:
    """4x4 matrix with ``H(theta)^T x == _n_matrix(x) @ theta``."""
    return np.einsum("kij,i->jk", H_BASIS, x)


def energy_derivatives(bodies: Sequence[RigidBody], force: ForceModel, y: np.ndarray, y1: np.ndarray,
                       hessian: bool = True):
    """Gradient and Hessian of ``T + U`` with respect to the stacked point ``(y, y1)``."""
    N = y.size
    grad = np.zeros(2 * N)
    hess = np.zeros((2 * N, 2 * N)) if hessian else None
    grad[:N] = force.potential_gradient(bodies, y)
    if hessian:
        hess[:N, :N] = force.potential_hessian(bodies, y)
    for i, body in enumerate(bodies):
        r1 = slice(N + BODY_COORDS * i, N + BODY_COORDS * i + 3)
        th = slice(BODY_COORDS * i + 3, BODY_COORDS * (i + 1))
        th1 = slice(N + BODY_COORDS * i + 3, N + BODY_COORDS * (i + 1))
        theta, theta1 = y[th], y1[th.start:th.stop]
        H, H1 = h_matrix(theta), h_matrix(theta1)
        Iu = body.inertia @ (H @ theta1)
        grad[r1] = body.mass * y1[r1.start - N:r1.stop - N]
        grad[th1] = 4.0 * H.T @ Iu
        grad[th] += -4.0 * H1.T @ Iu
        if hessian:
            hess[r1, r1] = body.mass * np.eye(3)
            hess[th1, th1] = 4.0 * H.T @ body.inertia @ H
            hess[th, th] += 4.0 * H1.T @ body.inertia @ H1
            mixed = 4.0 * (_n_matrix(Iu) - H.T @ body.inertia @ H1)   # rows theta1, cols theta
            hess[th1, th] = mixed
            hess[th, th1] = mixed.T
    return grad, hess


def power_derivatives(bodies: Sequence[RigidBody], force: ForceModel, y: np.ndarray, y1: np.ndarray,
                      hessian: bool = True):
    """Gradient and Hessian of the external power with respect to ``(y, y1)``."""
    N = y.size
    grad = np.zeros(2 * N)
    hess = np.zeros((2 * N, 2 * N)) if hessian else None
    for i in range(len(bodies)):
        r1 = slice(N + BODY_COORDS * i, N + BODY_COORDS * i + 3)
        th = slice(BODY_COORDS * i + 3, BODY_COORDS * (i + 1))
        th1 = slice(N + BODY_COORDS * i + 3, N + BODY_COORDS * (i + 1))
        tau = force.torque(i)
        grad[r1] = force.force(i)
        grad[th1] = 2.0 * h_matrix(y[th]).T @ tau
        grad[th] = -2.0 * h_matrix(y1[th]).T @ tau
        if hessian:
            mixed = 2.0 * _n_matrix(tau)
            hess[th1, th] = mixed
            hess[th, th1] = mixed.T
    return grad, hess
