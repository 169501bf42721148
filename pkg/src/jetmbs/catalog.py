"""Reference definitions of the built-in mechanisms.

The JSON files shipped under ``jetmbs/models`` are generated from these
functions by ``scripts/make_builtin_models.py``; a golden-file test keeps
the two in sync.  Initial data are given to three decimals, so the states
are only consistent to about 1e-3 until ``check_model`` projects them.
"""
from __future__ import annotations

from dataclasses import replace

from .models import (
    BodySpec,
    ForcesSpec,
    IntegratorSpec,
    JointSpec,
    LoadSpec,
    ModelSpec,
    check_model,
    restrict_model,
)

E1, E2, E3 = (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)
GRAVITY = (0.0, -9.81, 0.0)


def pendulum() -> ModelSpec:
    return ModelSpec(
        name="pendulum",
        description="Compound pendulum hanging from a spherical joint at the origin, released from rest along e1.",
        bodies=(BodySpec(38.34, (0.147, 3.175, 3.154), (0.765, 0.0, 0.0), (1.0, 0.0, 0.0, 0.0), label="pendulum"),),
        joints=(JointSpec("spherical", 0, 1, (0.0, 0.0, 0.0), (-0.765, 0.0, 0.0)),),
        forces=ForcesSpec(gravity=GRAVITY),
        integrator=IntegratorSpec(atol=1e-6, rtol=1e-6, h0=0.25, fac_max=3.0, t_end=10.0),
    )


def quadrangle() -> ModelSpec:
    return ModelSpec(
        name="quadrangle",
        description="Closed four-bar loop in the e1 e2 plane built from revolute, spherical and cylindrical "
                    "joints, driven by a constant torque on the crank.",
        bodies=(
            BodySpec(78.10, (0.08, 26.05, 26.1), (0.500, 0.866, 0.0), (0.866, 0.0, 0.0, 0.500), label="crank"),
            BodySpec(156.20, (0.16, 208.3, 208.4), (2.824, 2.553, 0.0), (0.978, 0.0, 0.0, 0.210), label="coupler"),
            BodySpec(156.20, (0.16, 208.3, 208.4), (3.574, 1.687, 0.0), (0.877, 0.0, 0.0, 0.481), label="rocker"),
        ),
        joints=(
            JointSpec("revolute", 0, 1, (0.0, 0.0, 0.0), (-1.0, 0.0, 0.0), a_i=E2, b_i=E1, a_j=E3),
            JointSpec("spherical", 1, 2, (1.0, 0.0, 0.0), (-2.0, 0.0, 0.0)),
            JointSpec("cylindrical", 2, 3, (2.0, 0.0, 0.0), (2.0, 0.0, 0.0), a_i=E1, b_i=E2, a_j=E3),
            JointSpec("revolute", 3, 0, (-2.0, 0.0, 0.0), (2.5, 0.0, 0.0), a_i=E1, b_i=E2, a_j=E3),
        ),
        forces=ForcesSpec(gravity=GRAVITY, loads=(LoadSpec(1, torque=(0.0, 0.0, -1200.0)),)),
        integrator=IntegratorSpec(atol=1e-8, rtol=1e-8, h0=0.25, fac_max=3.0, t_end=10.0),
    )


def crank() -> ModelSpec:
    return ModelSpec(
        name="crank",
        description="Spatial slider-crank: a crank turning about e1 drives a slider along e1 through a "
                    "connecting rod with spherical and universal ends.",
        bodies=(
            BodySpec(19.50, (0.02, 0.41, 0.42), (0.0, 0.0, -0.25), (0.707, 0.0, 0.707, 0.0), label="crank"),
            BodySpec(70.29, (0.07, 18.99, 19.04), (0.9, 0.0, -0.5), (1.0, 0.0, 0.0, 0.0), label="rod"),
            BodySpec(7.81, (0.01, 0.01, 0.01), (1.8, 0.0, -0.5), (1.0, 0.0, 0.0, 0.0), label="slider"),
        ),
        joints=(
            JointSpec("spherical", 1, 2, (0.25, 0.0, 0.0), (-0.9, 0.0, 0.0)),
            JointSpec("translational", 0, 3, (0.0, 0.0, 0.0), (-1.8, 0.0, 0.5), a_i=E2, b_i=E3, a_j=E1, b_j=E3),
            JointSpec("universal", 2, 3, (0.9, 0.0, 0.0), (0.0, 0.0, 0.0), a_i=E2, a_j=E3),
            JointSpec("revolute", 1, 0, (-0.25, 0.0, 0.0), (0.0, 0.0, 0.0), a_i=E2, b_i=E1, a_j=E1),
        ),
        forces=ForcesSpec(gravity=GRAVITY, loads=(LoadSpec(1, torque=(0.0, 0.0, -50.0)),)),
        integrator=IntegratorSpec(atol=1e-7, rtol=1e-7, h0=0.25, fac_max=3.0, t_end=10.0),
    )


def planar_quadrangle() -> ModelSpec:
    """Plane restriction of ``quadrangle`` started from its projected (consistent) state."""
    spec = restrict_model(check_model(quadrangle()).projected)
    return replace(spec, description="Plane restriction of the quadrangle, started from its consistent initial state.")


BUILDERS = {
    "pendulum": pendulum,
    "quadrangle": quadrangle,
    "crank": crank,
    "planar-quadrangle": planar_quadrangle,
}
