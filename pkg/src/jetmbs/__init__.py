"""Constrained rigid multibody simulation on the jet space with Euler parameters."""
from .body import ForceModel, RigidBody, SpringPotential, SystemJet, pack_jet
from .constraints import ConstraintPrimitive, ConstraintSet, make_joint
from .dynamics import DistributionResult, distribution, schur_solve
from .integrator import RunStats, StepControl, TrajectoryRecord, integrate, step
from .projection import ProjectionConfig, ProjectionReport, project_full, project_hc, project_orthogonal, project_theta
from .system import EnergyInvariant, Mechanism

__all__ = [
    "ConstraintPrimitive", "ConstraintSet", "DistributionResult", "EnergyInvariant", "ForceModel",
    "Mechanism", "ProjectionConfig", "ProjectionReport", "RigidBody", "RunStats", "SpringPotential",
    "StepControl", "SystemJet", "TrajectoryRecord", "distribution", "integrate", "make_joint",
    "pack_jet", "project_full", "project_hc", "project_orthogonal", "project_theta", "schur_solve", "step",
]
