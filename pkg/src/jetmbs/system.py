"""Mechanism: bodies + constraints + loads, and its energy invariant.

The projection and integrator modules only rely on the small surface
defined here (``n_coords``, ``theta_slices``, ``constraints``,
``distribution``, ``energies``, ``power`` and the energy/power derivatives),
so the planar engine plugs into the same machinery.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import body as _body
from .body import BODY_COORDS, ForceModel, RigidBody, SystemJet
from .constraints import ConstraintPrimitive, ConstraintSet
from .dynamics import DistributionResult, distribution


@dataclass
class Mechanism:
    bodies: Sequence[RigidBody]
    constraints: ConstraintSet
    forces: ForceModel = field(default_factory=ForceModel)
    schur_method: str = "direct"

    def __post_init__(self):
        self.bodies = tuple(self.bodies)
        if self.constraints.n_bodies != len(self.bodies):
            raise ValueError("constraint set and body list disagree on the number of bodies")

    @classmethod
    def build(cls, bodies, primitives: Sequence[ConstraintPrimitive], forces: ForceModel | None = None, **kw):
        return cls(bodies, ConstraintSet(primitives, len(bodies)), forces or ForceModel(), **kw)

    @property
    def n_coords(self) -> int:
        return BODY_COORDS * len(self.bodies)

    @property
    def n_dof_free(self) -> int:
        return 6 * len(self.bodies)

    @property
    def theta_slices(self) -> list[slice]:
        return [slice(BODY_COORDS * i + 3, BODY_COORDS * (i + 1)) for i in range(len(self.bodies))]

    def tangent_map(self, jet: SystemJet) -> np.ndarray:
        """Block-diagonal ``Hop``; ``dg @ Hop.T`` is the constraint Jacobian on the tangent space."""
        return _body.block_operators(self.bodies, jet).H

    def distribution(self, jet: SystemJet) -> DistributionResult:
        return distribution(self, jet, method=self.schur_method)

    def energies(self, jet: SystemJet, w_ext: float = 0.0) -> _body.Energies:
        return _body.energies(self.bodies, jet, self.forces, w_ext)

    def power(self, jet: SystemJet) -> float:
        return _body.power(self.bodies, jet, self.forces)

    def energy_derivatives(self, y, y1, hessian=True):
        return _body.energy_derivatives(self.bodies, self.forces, y, y1, hessian)

    def power_derivatives(self, y, y1, hessian=True):
        return _body.power_derivatives(self.bodies, self.forces, y, y1, hessian)

    @property
    def has_loads(self) -> bool:
        return self.forces.has_loads


class EnergyInvariant:
    """Scalar invariant ``W_total(p) - W_total(0)`` on the jet ``p = (y, y1)``.

    With external loads and ``h > 0`` the work term is the trapezoidal update
    ``W_ext = w_ext_prev + h/2 (P_prev + P(p))``, so the invariant is
    consistent with the running work integral at the end of a step of size
    ``h``.  With ``h = 0`` the work is the fixed value ``w_ext_prev``.

    The residual is divided by ``1 + |target|`` so that the projection
    tolerance acts on the relative energy error.
    """

    size = 1

    def __init__(self, system, target: float, w_ext_prev: float = 0.0, power_prev: float = 0.0, h: float = 0.0):
        self.system = system
        self.target = float(target)
        self.w_ext_prev = float(w_ext_prev)
        self.power_prev = float(power_prev)
        self.h = float(h)
        self.loaded = system.has_loads
        self.scale = 1.0 / (1.0 + abs(self.target))

    def w_ext(self, jet: SystemJet) -> float:
        if not self.loaded:
            return self.w_ext_prev
        return self.w_ext_prev + 0.5 * self.h * (self.power_prev + self.system.power(jet))

    def value(self, y, y1) -> np.ndarray:
        jet = SystemJet(0.0, y, y1)
        e = self.system.energies(jet, self.w_ext(jet))
        return np.array([self.scale * (e.W_total - self.target)])

    def jacobian(self, y, y1) -> np.ndarray:
        g, _ = self.system.energy_derivatives(y, y1, hessian=False)
        if self.loaded:
            gp, _ = self.system.power_derivatives(y, y1, hessian=False)
            g = g - 0.5 * self.h * gp
        return self.scale * g[None, :]

    def weighted_hessian(self, y, y1, mu) -> np.ndarray:
        _, Hs = self.system.energy_derivatives(y, y1, hessian=True)
        if self.loaded:
            _, Hp = self.system.power_derivatives(y, y1, hessian=True)
            Hs = Hs - 0.5 * self.h * Hp
        return self.scale * mu[0] * Hs
