"""Planar rigid bodies joined by pins.

Each body carries ``(x, y, beta)``; the saddle system is

    E y2 + dg^T lam = F_e - grad U,     dg y2 = -d2g(y1, y1)

with ``E = diag(m, m, I_p)`` per body.  There is no velocity-quadratic
inertial term in the plane.  The classes mirror the 3D ones closely enough
that the projection cascade and the integrator run on them unchanged
(``theta_slices`` is empty).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .body import BODY_COORDS, Energies, SystemJet
from .dynamics import DistributionResult, SaddleSystem, schur_solve
from .rotation import theta_from_planar_angle

PLANAR_COORDS = 3
PLANARITY_TOL = 1e-8


@dataclass(frozen=True)
class PlanarBody:
    mass: float
    inertia_p: float
    label: str = ""

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if not self.inertia_p > 0:
            raise ValueError(f"polar inertia must be positive, got {self.inertia_p}")
        object.__setattr__(self, "mass", float(self.mass))
        object.__setattr__(self, "inertia_p", float(self.inertia_p))


@dataclass(frozen=True)
class PlanarPin:
    """Point ``chi_i`` of body ``i`` coincides with point ``chi_j`` of body ``j``."""

    body_i: int
    body_j: int
    chi_i: np.ndarray = field(default_factory=lambda: np.zeros(2))
    chi_j: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        if self.body_i == self.body_j:
            raise ValueError("a pin needs two different bodies")
        for name in ("chi_i", "chi_j"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(2))


def _rot(beta: float) -> np.ndarray:
    c, s = np.cos(beta), np.sin(beta)
    return np.array([[c, -s], [s, c]])


class PlanarConstraintSet:
    """Stacked pin constraints; body 0 is the fixed ground."""

    has_third_derivative = True
    theta_slices: list = []

    def __init__(self, pins: Sequence[PlanarPin], n_bodies: int):
        self.primitives = tuple(pins)
        self.n_bodies = n_bodies
        self.n_coords = PLANAR_COORDS * n_bodies
        for p in self.primitives:
            for b in (p.body_i, p.body_j):
                if not 0 <= b <= n_bodies:
                    raise ValueError(f"pin references body {b}, model has {n_bodies}")
        self.ell = 2 * len(self.primitives)
        self.row_owner = [k for k in range(len(self.primitives)) for _ in range(2)]

    def _terms(self, p: PlanarPin):
        return ((1.0, p.body_j, p.chi_j), (-1.0, p.body_i, p.chi_i))

    def residual(self, y):
        out = np.zeros(self.ell)
        for k, p in enumerate(self.primitives):
            for sign, b, chi in self._terms(p):
                if b == 0:
                    out[2 * k:2 * k + 2] += sign * chi
                else:
                    o = PLANAR_COORDS * (b - 1)
                    out[2 * k:2 * k + 2] += sign * (y[o:o + 2] + _rot(y[o + 2]) @ chi)
        return out

    def jacobian(self, y):
        J = np.zeros((self.ell, self.n_coords))
        for k, p in enumerate(self.primitives):
            for sign, b, chi in self._terms(p):
                if b == 0:
                    continue
                o = PLANAR_COORDS * (b - 1)
                J[2 * k:2 * k + 2, o:o + 2] += sign * np.eye(2)
                Rc = _rot(y[o + 2]) @ chi
                J[2 * k:2 * k + 2, o + 2] += sign * np.array([-Rc[1], Rc[0]])
        return J

    def second_differential_rows(self, y, v):
        D = np.zeros((self.ell, self.n_coords))
        for k, p in enumerate(self.primitives):
            for sign, b, chi in self._terms(p):
                if b == 0:
                    continue
                o = PLANAR_COORDS * (b - 1)
                D[2 * k:2 * k + 2, o + 2] += -sign * (_rot(y[o + 2]) @ chi) * v[o + 2]
        return D

    def second_differential(self, y, v):
        return self.second_differential_rows(y, v) @ v

    def second_differential_directional(self, y, v, w):
        return w @ self.second_differential_rows(y, v)

    def weighted_hessian(self, y, w):
        Hs = np.zeros((self.n_coords, self.n_coords))
        for k, p in enumerate(self.primitives):
            for sign, b, chi in self._terms(p):
                if b == 0:
                    continue
                o = PLANAR_COORDS * (b - 1)
                Hs[o + 2, o + 2] += -sign * float(w[2 * k:2 * k + 2] @ (_rot(y[o + 2]) @ chi))
        return Hs

    def o_gaps(self, y):
        return []

    def check_geometry(self, y):
        return []


@dataclass(frozen=True)
class PlanarForceModel:
    """In-plane gravity, scalar torques and planar forces per body."""

    gravity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    torques: np.ndarray | None = None
    forces: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "gravity", np.asarray(self.gravity, dtype=float).reshape(2))
        if self.torques is not None:
            object.__setattr__(self, "torques", np.asarray(self.torques, dtype=float).reshape(-1))
        if self.forces is not None:
            object.__setattr__(self, "forces", np.atleast_2d(np.asarray(self.forces, dtype=float)))

    def external_vector(self, n: int) -> np.ndarray:
        out = np.zeros(PLANAR_COORDS * n)
        for i in range(n):
            if self.forces is not None:
                out[3 * i:3 * i + 2] = self.forces[i]
            if self.torques is not None:
                out[3 * i + 2] = self.torques[i]
        return out

    @property
    def has_loads(self) -> bool:
        return any(v is not None and np.any(v != 0) for v in (self.torques, self.forces))


@dataclass
class PlanarMechanism:
    bodies: Sequence[PlanarBody]
    constraints: PlanarConstraintSet
    forces: PlanarForceModel = field(default_factory=PlanarForceModel)
    schur_method: str = "direct"

    def __post_init__(self):
        self.bodies = tuple(self.bodies)
        if self.constraints.n_bodies != len(self.bodies):
            raise ValueError("pin set and body list disagree on the number of bodies")

    @classmethod
    def build(cls, bodies, pins, forces: PlanarForceModel | None = None, **kw):
        return cls(bodies, PlanarConstraintSet(pins, len(bodies)), forces or PlanarForceModel(), **kw)

    @property
    def n_coords(self) -> int:
        return PLANAR_COORDS * len(self.bodies)

    @property
    def n_dof_free(self) -> int:
        return PLANAR_COORDS * len(self.bodies)

    @property
    def theta_slices(self) -> list:
        return []

    @property
    def has_loads(self) -> bool:
        return self.forces.has_loads

    def mass_diagonal(self) -> np.ndarray:
        return np.concatenate([[b.mass, b.mass, b.inertia_p] for b in self.bodies])

    def potential_gradient(self, y) -> np.ndarray:
        g = np.zeros_like(y)
        for i, b in enumerate(self.bodies):
            g[3 * i:3 * i + 2] = -b.mass * self.forces.gravity
        return g

    def distribution(self, jet: SystemJet) -> DistributionResult:
        return planar_distribution(self, jet, method=self.schur_method)

    def energies(self, jet: SystemJet, w_ext: float = 0.0) -> Energies:
        M = self.mass_diagonal()
        T = 0.5 * float(jet.y1 @ (M * jet.y1))
        U = float(self.potential_gradient(jet.y) @ jet.y)
        return Energies(T=T, U=U, W=T + U, W_total=T + U - w_ext)

    def power(self, jet: SystemJet) -> float:
        return float(self.forces.external_vector(len(self.bodies)) @ jet.y1)

    def energy_derivatives(self, y, y1, hessian=True):
        N = y.size
        M = self.mass_diagonal()
        grad = np.concatenate([self.potential_gradient(y), M * y1])
        if not hessian:
            return grad, None
        Hs = np.zeros((2 * N, 2 * N))
        Hs[N:, N:] = np.diag(M)
        return grad, Hs

    def power_derivatives(self, y, y1, hessian=True):
        N = y.size
        grad = np.concatenate([np.zeros(N), self.forces.external_vector(len(self.bodies))])
        return grad, (np.zeros((2 * N, 2 * N)) if hessian else None)


def planar_distribution(system: PlanarMechanism, jet: SystemJet, method: str = "direct") -> DistributionResult:
    """Accelerations and multipliers of a planar mechanism at a consistent jet."""
    cons = system.constraints
    dg = cons.jacobian(jet.y)
    d2g = cons.second_differential(jet.y, jet.y1)
    top = system.forces.external_vector(len(system.bodies)) - system.potential_gradient(jet.y)
    sys = SaddleSystem(E=np.diag(system.mass_diagonal()), G=dg, rhs_top=top, rhs_bottom=-d2g,
                       block_size=PLANAR_COORDS)
    y2, lam = schur_solve(sys, method=method)
    cdef = np.abs(dg @ y2 + d2g).max(initial=0.0)
    return DistributionResult(y2=y2, lam=lam, d=y2, constraint_defect=float(cdef), theta_defect=0.0)


# -- 2D <-> 3D jets ------------------------------------------------------------

def beta_from_theta(theta) -> float:
    return 2.0 * float(np.arctan2(theta[3], theta[0]))


def restrict_to_plane(jet: SystemJet, tol: float = PLANARITY_TOL) -> SystemJet:
    """Planar jet ``(x, y, beta)`` of a 3D jet whose motion lies in the e1 e2 plane.

    Raises
    ------
    ValueError
        If any out-of-plane component exceeds ``tol``.
    """
    n = jet.y.size // BODY_COORDS
    y, y1 = np.zeros(3 * n), np.zeros(3 * n)
    for i in range(n):
        o = BODY_COORDS * i
        r, th = jet.y[o:o + 3], jet.y[o + 3:o + 7]
        r1, th1 = jet.y1[o:o + 3], jet.y1[o + 3:o + 7]
        off = max(abs(r[2]), abs(th[1]), abs(th[2]), abs(r1[2]), abs(th1[1]), abs(th1[2]))
        if off > tol:
            raise ValueError(f"body {i + 1} leaves the plane (out-of-plane component {off:.3g})")
        y[3 * i:3 * i + 3] = (r[0], r[1], beta_from_theta(th))
        y1[3 * i:3 * i + 3] = (r1[0], r1[1], 2.0 * (th[0] * th1[3] - th[3] * th1[0]))
    return SystemJet(jet.t, y, y1)


def lift_jet(jet: SystemJet) -> SystemJet:
    """3D jet of a planar jet (z = 0, rotation about e3)."""
    n = jet.y.size // PLANAR_COORDS
    y, y1 = np.zeros(BODY_COORDS * n), np.zeros(BODY_COORDS * n)
    for i in range(n):
        x, yy, beta = jet.y[3 * i:3 * i + 3]
        x1, yy1, beta1 = jet.y1[3 * i:3 * i + 3]
        o = BODY_COORDS * i
        y[o:o + 7] = (x, yy, 0.0, *theta_from_planar_angle(beta))
        half = 0.5 * beta
        y1[o:o + 7] = (x1, yy1, 0.0, -0.5 * beta1 * np.sin(half), 0.0, 0.0, 0.5 * beta1 * np.cos(half))
    return SystemJet(jet.t, y, y1)


def wrap_angle(a):
    """Map angles to ``(-pi, pi]``."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2 * np.pi)


EQUIVALENCE_FACTOR = 10.0


def equivalence_gap(a: SystemJet, b: SystemJet, atol: float, rtol: float) -> float:
    """Scaled RMS distance between two planar jets, angles compared modulo 2 pi.

    Two trajectories are taken as equivalent while this stays at or below
    ``EQUIVALENCE_FACTOR``.
    """
    pa, pb = np.r_[a.y, a.y1], np.r_[b.y, b.y1]
    d = pa - pb
    n = a.y.size
    d[2:n:PLANAR_COORDS] = wrap_angle(d[2:n:PLANAR_COORDS])
    scale = atol + rtol * np.maximum(np.abs(pa), np.abs(pb))
    return float(np.sqrt(np.mean((d / scale) ** 2)))
