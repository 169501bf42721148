"""Declarative model files, built-in mechanisms, consistency check and simulation driver.

Model files are UTF-8 JSON (``"schema": 1``).  Every quantity is SI and every
vector an array; unknown keys are rejected.  Three-dimensional bodies carry
``r, theta, r1, theta1``; planar ones (``"planar": true``) carry
``r, beta, r1, beta1`` and a scalar polar inertia.
"""
from __future__ import annotations

import csv
import io
import json
import re
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Callable, TextIO

import jsonschema
import numpy as np

from .body import ForceModel, RigidBody, SystemJet, pack_jet
from .constraints import DegenerateGeometryWarning, make_joint
from .dynamics import dependent_rows
from .integrator import (
    IntegrationError,
    RunStats,
    StepControl,
    StepRecord,
    TrajectoryRecord,
    integrate,
)
from .planar import (
    PlanarBody,
    PlanarForceModel,
    PlanarMechanism,
    PlanarPin,
    beta_from_theta,
    restrict_to_plane,
)
from .projection import ProjectionConfig, ProjectionError, project_full, residual_families
from .rotation import theta_from_planar_angle
from .system import Mechanism

SCHEMA_VERSION = 1
BUILTIN_NAMES = ("pendulum", "quadrangle", "crank", "planar-quadrangle")
JOINT_AXES = {
    "spherical": (),
    "universal": ("a_i", "a_j"),
    "revolute": ("a_i", "b_i", "a_j"),
    "cylindrical": ("a_i", "b_i", "a_j"),
    "translational": ("a_i", "b_i", "a_j", "b_j"),
    "pin": (),
}
RANK_RTOL = 1e-10
CHECK_TOL = 1e-12


class ModelValidationError(ValueError):
    """Malformed or inconsistent model description."""


# -- schema ------------------------------------------------------------------

def _vec(n):
    return {"type": "array", "items": {"type": "number"}, "minItems": n, "maxItems": n}


_JOINT_RULES = [
    {"if": {"properties": {"type": {"const": kind}}},
     "then": {"required": list(axes)}}
    for kind, axes in JOINT_AXES.items() if axes
]

MODEL_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema", "name", "bodies", "joints"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "description": {"type": "string"},
        "planar": {"type": "boolean"},
        "bodies": {"type": "array", "minItems": 1, "items": {"type": "object"}},
        "joints": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["type", "body_i", "body_j"],
                "properties": {
                    "type": {"enum": list(JOINT_AXES)},
                    "body_i": {"type": "integer", "minimum": 0},
                    "body_j": {"type": "integer", "minimum": 0},
                    "chi_i": {"type": "array", "items": {"type": "number"}},
                    "chi_j": {"type": "array", "items": {"type": "number"}},
                    "a_i": _vec(3), "b_i": _vec(3), "a_j": _vec(3), "b_j": _vec(3),
                },
                "allOf": _JOINT_RULES,
            },
        },
        "forces": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "gravity": {"type": "array", "items": {"type": "number"}},
                "loads": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["body"],
                        "properties": {
                            "body": {"type": "integer", "minimum": 1},
                            "torque": {"type": ["array", "number"]},
                            "force": {"type": "array", "items": {"type": "number"}},
                        },
                    },
                },
            },
        },
        "integrator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: {"type": "number", "exclusiveMinimum": 0}
                           for k in ("atol", "rtol", "h0", "fac_max", "fac_min", "safety", "t_end")},
        },
        "projection": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tol_abs": {"type": "number", "exclusiveMinimum": 0},
                "mode": {"enum": ["quasi", "orthogonal"]},
                "max_outer": {"type": "integer", "minimum": 1},
                "max_newton": {"type": "integer", "minimum": 1},
                "forcing": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
            },
        },
        "invariants": {"enum": ["on", "off"]},
    },
    "if": {"properties": {"planar": {"const": True}}, "required": ["planar"]},
    "then": {
        "properties": {
            "bodies": {"items": {
                "additionalProperties": False,
                "required": ["mass", "inertia_p", "r", "beta"],
                "properties": {
                    "label": {"type": "string"},
                    "mass": {"type": "number"},
                    "inertia_p": {"type": "number"},
                    "inertia_3d": {"type": "array"},
                    "r": _vec(2), "beta": {"type": "number"},
                    "r1": _vec(2), "beta1": {"type": "number"},
                },
            }},
            "joints": {"items": {"properties": {"type": {"const": "pin"},
                                                "chi_i": _vec(2), "chi_j": _vec(2)}}},
            "forces": {"properties": {"gravity": _vec(2),
                                      "loads": {"items": {"properties": {"torque": {"type": "number"},
                                                                         "force": _vec(2)}}}}},
        },
    },
    "else": {
        "properties": {
            "bodies": {"items": {
                "additionalProperties": False,
                "required": ["mass", "inertia", "r", "theta"],
                "properties": {
                    "label": {"type": "string"},
                    "mass": {"type": "number"},
                    "inertia": {"type": "array"},
                    "r": _vec(3), "theta": _vec(4),
                    "r1": _vec(3), "theta1": _vec(4),
                },
            }},
            "joints": {"items": {"properties": {"type": {"not": {"const": "pin"}},
                                                "chi_i": _vec(3), "chi_j": _vec(3)}}},
            "forces": {"properties": {"gravity": _vec(3),
                                      "loads": {"items": {"properties": {"torque": _vec(3),
                                                                         "force": _vec(3)}}}}},
        },
    },
}


# -- dataclasses ---------------------------------------------------------------

@dataclass(frozen=True)
class BodySpec:
    mass: float
    inertia: tuple
    r: tuple
    theta: tuple
    r1: tuple = (0.0, 0.0, 0.0)
    theta1: tuple = (0.0, 0.0, 0.0, 0.0)
    label: str = ""


@dataclass(frozen=True)
class PlanarBodySpec:
    mass: float
    inertia_p: float
    r: tuple
    beta: float
    r1: tuple = (0.0, 0.0)
    beta1: float = 0.0
    inertia_3d: tuple | None = None
    label: str = ""


@dataclass(frozen=True)
class JointSpec:
    type: str
    body_i: int
    body_j: int
    chi_i: tuple = (0.0, 0.0, 0.0)
    chi_j: tuple = (0.0, 0.0, 0.0)
    a_i: tuple | None = None
    b_i: tuple | None = None
    a_j: tuple | None = None
    b_j: tuple | None = None


@dataclass(frozen=True)
class LoadSpec:
    body: int
    torque: tuple | float | None = None
    force: tuple | None = None


@dataclass(frozen=True)
class ForcesSpec:
    gravity: tuple = (0.0, 0.0, 0.0)
    loads: tuple = ()


@dataclass(frozen=True)
class IntegratorSpec:
    atol: float = 1e-6
    rtol: float = 1e-6
    h0: float = 0.25
    fac_max: float = 3.0
    fac_min: float = 0.2
    safety: float = 0.9
    t_end: float = 10.0


@dataclass(frozen=True)
class ProjectionSpec:
    tol_abs: float = 1e-5
    mode: str = "quasi"
    max_outer: int = 20
    max_newton: int = 50
    forcing: float = 0.0


@dataclass(frozen=True)
class ModelSpec:
    name: str
    bodies: tuple
    joints: tuple
    forces: ForcesSpec = field(default_factory=ForcesSpec)
    integrator: IntegratorSpec = field(default_factory=IntegratorSpec)
    projection: ProjectionSpec = field(default_factory=ProjectionSpec)
    invariants: str = "on"
    planar: bool = False
    description: str = ""
    schema: int = SCHEMA_VERSION

    @property
    def n_bodies(self) -> int:
        return len(self.bodies)

    def step_control(self, **overrides) -> StepControl:
        d = asdict(self.integrator)
        d.update(overrides)
        return StepControl(**d)

    def projection_config(self, **overrides) -> ProjectionConfig:
        d = asdict(self.projection)
        d.update(overrides)
        return ProjectionConfig(**d)

    def mechanism(self):
        """Build the (3D or planar) mechanism."""
        n = self.n_bodies
        if self.planar:
            bodies = [PlanarBody(b.mass, b.inertia_p, b.label) for b in self.bodies]
            pins = [PlanarPin(j.body_i, j.body_j, j.chi_i, j.chi_j) for j in self.joints]
            torques, forces = np.zeros(n), np.zeros((n, 2))
            for ld in self.forces.loads:
                torques[ld.body - 1] += ld.torque or 0.0
                if ld.force is not None:
                    forces[ld.body - 1] += ld.force
            return PlanarMechanism.build(bodies, pins, PlanarForceModel(self.forces.gravity, torques, forces))
        bodies = [RigidBody(b.mass, b.inertia, b.label) for b in self.bodies]
        prims = []
        for j in self.joints:
            axes = {k: getattr(j, k) for k in ("a_i", "b_i", "a_j", "b_j")}
            prims += make_joint(j.type, j.body_i, j.body_j, j.chi_i, j.chi_j, **axes)
        torques, forces = np.zeros((n, 3)), np.zeros((n, 3))
        for ld in self.forces.loads:
            if ld.torque is not None:
                torques[ld.body - 1] += ld.torque
            if ld.force is not None:
                forces[ld.body - 1] += ld.force
        return Mechanism.build(bodies, prims, ForceModel(self.forces.gravity, torques, forces))

    def initial_jet(self) -> SystemJet:
        if self.planar:
            y = np.concatenate([[*b.r, b.beta] for b in self.bodies])
            y1 = np.concatenate([[*b.r1, b.beta1] for b in self.bodies])
            return SystemJet(0.0, y, y1)
        return pack_jet(0.0, [b.r for b in self.bodies], [b.theta for b in self.bodies],
                        [b.r1 for b in self.bodies], [b.theta1 for b in self.bodies])

    def with_initial_jet(self, jet: SystemJet) -> "ModelSpec":
        """Copy with the initial state replaced by ``jet``."""
        y, y1 = [float(v) for v in jet.y], [float(v) for v in jet.y1]
        if self.planar:
            bodies = tuple(replace(b, r=tuple(y[3 * i:3 * i + 2]), beta=y[3 * i + 2],
                                   r1=tuple(y1[3 * i:3 * i + 2]), beta1=y1[3 * i + 2])
                           for i, b in enumerate(self.bodies))
        else:
            bodies = tuple(replace(b, r=tuple(y[7 * i:7 * i + 3]), theta=tuple(y[7 * i + 3:7 * i + 7]),
                                   r1=tuple(y1[7 * i:7 * i + 3]), theta1=tuple(y1[7 * i + 3:7 * i + 7]))
                           for i, b in enumerate(self.bodies))
        return replace(self, bodies=bodies)


# -- parsing and serialisation -----------------------------------------------------

def _tuplify(v):
    if isinstance(v, list):
        return tuple(_tuplify(x) for x in v)
    if isinstance(v, int) and not isinstance(v, bool):
        return v
    return v


def _floats(v):
    if isinstance(v, (list, tuple)):
        return tuple(_floats(x) for x in v)
    return float(v)


def _build(cls, data: dict, floats=()):
    kw = {}
    for f in fields(cls):
        if f.name in data:
            v = data[f.name]
            kw[f.name] = _floats(v) if f.name in floats and v is not None else _tuplify(v)
    return cls(**kw)


def spec_from_dict(data: dict) -> ModelSpec:
    """Validate a parsed document and build a ``ModelSpec`` with defaults applied.

    Raises
    ------
    ModelValidationError
        Naming the offending field (schema) or rule (body indices, axes).
    """
    validator = jsonschema.Draft202012Validator(MODEL_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ModelValidationError(f"{where}: {e.message}")
    planar = bool(data.get("planar", False))
    vec_fields = ("r", "theta", "r1", "theta1", "inertia", "inertia_3d", "mass", "inertia_p", "beta", "beta1")
    body_cls = PlanarBodySpec if planar else BodySpec
    bodies = tuple(_build(body_cls, b, vec_fields) for b in data["bodies"])
    joints = tuple(_build(JointSpec, j, ("chi_i", "chi_j", "a_i", "b_i", "a_j", "b_j")) for j in data["joints"])
    if planar:
        joints = tuple(replace(j, chi_i=j.chi_i if "chi_i" in jd else (0.0, 0.0),
                               chi_j=j.chi_j if "chi_j" in jd else (0.0, 0.0))
                       for j, jd in zip(joints, data["joints"]))
    fd = data.get("forces", {})
    loads = tuple(_build(LoadSpec, ld, ("torque", "force")) for ld in fd.get("loads", []))
    gravity = _floats(fd["gravity"]) if "gravity" in fd else (0.0,) * (2 if planar else 3)
    spec = ModelSpec(
        name=data["name"],
        description=data.get("description", ""),
        planar=planar,
        bodies=bodies,
        joints=joints,
        forces=ForcesSpec(gravity=gravity, loads=loads),
        integrator=_build(IntegratorSpec, {k: float(v) for k, v in data.get("integrator", {}).items()}),
        projection=_build(ProjectionSpec, data.get("projection", {})),
        invariants=data.get("invariants", "on"),
    )
    _semantic_checks(spec)
    return spec


def _semantic_checks(spec: ModelSpec):
    n = spec.n_bodies
    for k, j in enumerate(spec.joints):
        for side in ("body_i", "body_j"):
            b = getattr(j, side)
            if b > n:
                raise ModelValidationError(f"joints/{k}/{side}: body {b} does not exist (model has {n} bodies)")
        if j.body_i == j.body_j:
            raise ModelValidationError(f"joints/{k}: body_i and body_j must differ")
        for name in JOINT_AXES[j.type]:
            v = np.asarray(getattr(j, name))
            if abs(np.linalg.norm(v) - 1.0) > 1e-12:
                raise ModelValidationError(f"joints/{k}/{name}: axis vectors must have unit length")
    for k, ld in enumerate(spec.forces.loads):
        if ld.body > n:
            raise ModelValidationError(f"forces/loads/{k}/body: body {ld.body} does not exist")
    try:
        spec.step_control()
        spec.projection_config()
        spec.mechanism()
    except ValueError as exc:
        raise ModelValidationError(str(exc)) from exc


def spec_to_dict(spec: ModelSpec) -> dict:
    """Plain dict with every default spelled out; ``None`` fields are omitted."""
    def clean(obj):
        if isinstance(obj, dict):
            return {k: clean(v) for k, v in obj.items() if v is not None}
        if isinstance(obj, (list, tuple)):
            return [clean(v) for v in obj]
        return obj

    d = asdict(spec)
    order = ["schema", "name", "description", "planar", "bodies", "joints", "forces",
             "integrator", "projection", "invariants"]
    return clean({k: d[k] for k in order})


_NUM_ARRAY = re.compile(r"\[\s*((?:-?[\d.eE+-]+\s*,\s*)*-?[\d.eE+-]+)\s*\]")


def dumps(spec: ModelSpec) -> str:
    text = json.dumps(spec_to_dict(spec), indent=2, ensure_ascii=False)
    # numeric arrays on one line keep the files diff-friendly
    text = _NUM_ARRAY.sub(lambda m: "[" + ", ".join(s.strip() for s in m.group(1).split(",")) + "]", text)
    return text + "\n"


def loads(text: str) -> ModelSpec:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelValidationError(f"JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return spec_from_dict(data)


def builtin_path(name: str):
    if name not in BUILTIN_NAMES:
        raise KeyError(f"unknown built-in model {name!r}; available: {', '.join(BUILTIN_NAMES)}")
    return resources.files("jetmbs") / "models" / f"{name}.json"


def load_model(source: str | Path) -> ModelSpec:
    """Load a model file, or a built-in by name."""
    if str(source) in BUILTIN_NAMES:
        return loads(builtin_path(str(source)).read_text(encoding="utf-8"))
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelValidationError(f"cannot read {path}: {exc}") from exc
    return loads(text)


def save_model(spec: ModelSpec, path: str | Path):
    Path(path).write_text(dumps(spec), encoding="utf-8")


# -- planar <-> 3D models ---------------------------------------------------------

E1, E2, E3 = (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)


def restrict_model(spec: ModelSpec) -> ModelSpec:
    """Planar model of a 3D mechanism moving in the e1 e2 plane.

    Every joint becomes a pin through its attachment points; polar inertia is
    the e3 entry of the inertia tensor, which is kept for the way back.

    Raises
    ------
    ValueError
        If the initial state or any load is out of plane.
    """
    if spec.planar:
        return spec
    jet2 = restrict_to_plane(spec.initial_jet())
    bodies = []
    for i, b in enumerate(spec.bodies):
        I3 = np.asarray(b.inertia, dtype=float)
        I3 = np.diag(I3) if I3.ndim == 1 else I3
        bodies.append(PlanarBodySpec(
            mass=b.mass, inertia_p=float(I3[2, 2]), r=tuple(jet2.y[3 * i:3 * i + 2]), beta=float(jet2.y[3 * i + 2]),
            r1=tuple(jet2.y1[3 * i:3 * i + 2]), beta1=float(jet2.y1[3 * i + 2]), inertia_3d=b.inertia, label=b.label,
        ))
    joints = tuple(JointSpec("pin", j.body_i, j.body_j, tuple(j.chi_i[:2]), tuple(j.chi_j[:2])) for j in spec.joints)
    g = spec.forces.gravity
    loads = []
    for ld in spec.forces.loads:
        tq, fc = ld.torque, ld.force
        if (tq is not None and any(abs(v) > 0 for v in tq[:2])) or (fc is not None and abs(fc[2]) > 0):
            raise ValueError(f"load on body {ld.body} is not planar")
        loads.append(LoadSpec(ld.body, None if tq is None else float(tq[2]), None if fc is None else tuple(fc[:2])))
    if abs(g[2]) > 0:
        raise ValueError("gravity has an out-of-plane component")
    return replace(spec, name=f"planar-{spec.name}", planar=True, bodies=tuple(bodies), joints=joints,
                   forces=ForcesSpec(gravity=tuple(g[:2]), loads=tuple(loads)))


def lift_model(spec: ModelSpec) -> ModelSpec:
    """3D model of a planar one.

    Pins at the ground become revolute joints about e3 and pins between bodies
    become spherical joints; trailing body-body pins are turned into
    cylindrical joints along e3 until the 3D count of degrees of freedom
    equals the planar one.
    """
    if not spec.planar:
        return spec
    n = spec.n_bodies
    kinds = ["revolute" if 0 in (j.body_i, j.body_j) else "spherical" for j in spec.joints]
    planar_dof = 3 * n - 2 * len(spec.joints)
    size = {"revolute": 5, "spherical": 3, "cylindrical": 4}
    for k in reversed(range(len(kinds))):
        if 6 * n - sum(size[s] for s in kinds) <= planar_dof:
            break
        if kinds[k] == "spherical":
            kinds[k] = "cylindrical"
    joints = []
    for kind, j in zip(kinds, spec.joints):
        axes = {} if kind == "spherical" else {"a_i": E1, "b_i": E2, "a_j": E3}
        joints.append(JointSpec(kind, j.body_i, j.body_j, (*j.chi_i, 0.0), (*j.chi_j, 0.0), **axes))
    bodies = []
    for b in spec.bodies:
        inertia = b.inertia_3d if b.inertia_3d is not None else (0.5 * b.inertia_p, 0.5 * b.inertia_p, b.inertia_p)
        half = 0.5 * b.beta
        bodies.append(BodySpec(
            mass=b.mass, inertia=inertia, r=(*b.r, 0.0), theta=tuple(float(v) for v in theta_from_planar_angle(b.beta)),
            r1=(*b.r1, 0.0), theta1=(-0.5 * b.beta1 * float(np.sin(half)), 0.0, 0.0, 0.5 * b.beta1 * float(np.cos(half))),
            label=b.label,
        ))
    loads = tuple(LoadSpec(ld.body, None if ld.torque is None else (0.0, 0.0, float(ld.torque)),
                           None if ld.force is None else (*ld.force, 0.0)) for ld in spec.forces.loads)
    name = spec.name[len("planar-"):] if spec.name.startswith("planar-") else spec.name
    return replace(spec, name=name, planar=False, bodies=tuple(bodies), joints=tuple(joints),
                   forces=ForcesSpec(gravity=(*spec.forces.gravity, 0.0), loads=loads))


# -- consistency check --------------------------------------------------------------

@dataclass
class ConsistencyReport:
    n_bodies: int
    ell: int
    rank: int
    dof: int
    dependent_rows: list
    residual_before: dict
    residual_after: dict
    correction: float
    o_gaps: list
    degenerate: list
    jet: SystemJet
    projected: ModelSpec

    @property
    def ok(self) -> bool:
        return not self.dependent_rows

    def summary(self) -> str:
        lines = [
            f"bodies               {self.n_bodies}",
            f"constraint rows      {self.ell}",
            f"rank(dg)             {self.rank}",
            f"degrees of freedom   {self.dof}",
            f"residual before      " + ", ".join(f"{k}={v:.3e}" for k, v in self.residual_before.items()),
            f"residual after       " + ", ".join(f"{k}={v:.3e}" for k, v in self.residual_after.items()),
            f"initial correction   {self.correction:.3e}",
        ]
        for k, gap in self.o_gaps:
            flag = "  (degenerate)" if k in self.degenerate else ""
            lines.append(f"O-constraint {k:<3d}     |d| = {gap:.3e}{flag}")
        if self.dependent_rows:
            lines.append(f"dependent rows       {self.dependent_rows}")
        return "\n".join(lines)


def _rank(system, jet, planar):
    dg = system.constraints.jacobian(jet.y)
    if not planar:
        dg = dg @ system.tangent_map(jet).T
    sv = np.linalg.svd(dg, compute_uv=False) if dg.size else np.zeros(0)
    rank = int(np.sum(sv > RANK_RTOL * sv[0])) if sv.size else 0
    return rank, (dependent_rows(dg, RANK_RTOL) if rank < dg.shape[0] else [])


def check_model(spec: ModelSpec) -> ConsistencyReport:
    """Project the initial state onto the constrained state space and count DOF.

    Raises
    ------
    ProjectionError
        If the initial data cannot be projected.
    """
    system = spec.mechanism()
    jet0 = spec.initial_jet()
    before = residual_families(system, jet0)
    cfg = replace(spec.projection_config(), tol_abs=CHECK_TOL, mode="quasi")
    rank, dep = _rank(system, jet0, spec.planar)
    # a rank-deficient system cannot be projected; report it at the supplied state
    jet = project_full(jet0, system, cfg)[0] if not dep else jet0
    if not dep:
        rank, dep = _rank(system, jet, spec.planar)
    after = residual_families(system, jet)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateGeometryWarning)
        degenerate = system.constraints.check_geometry(jet.y)
    gaps = system.constraints.o_gaps(jet.y)
    corr = float(np.abs(np.concatenate([jet.y - jet0.y, jet.y1 - jet0.y1])).max())
    return ConsistencyReport(
        n_bodies=spec.n_bodies, ell=system.constraints.ell, rank=rank, dof=system.n_dof_free - rank,
        dependent_rows=dep, residual_before=before, residual_after=after, correction=corr,
        o_gaps=gaps, degenerate=degenerate, jet=jet, projected=spec.with_initial_jet(jet),
    )


# -- simulation output ----------------------------------------------------------------

def csv_header(spec: ModelSpec) -> list[str]:
    cols = ["t", "h"]
    for i in range(1, spec.n_bodies + 1):
        if spec.planar:
            cols += [f"x{i}", f"y{i}", f"beta{i}"]
        else:
            cols += [f"r{i}_{k}" for k in range(3)] + [f"theta{i}_{k}" for k in range(4)]
    for i in range(1, spec.n_bodies + 1):
        if spec.planar:
            cols += [f"dx{i}", f"dy{i}", f"dbeta{i}"]
        else:
            cols += [f"dr{i}_{k}" for k in range(3)] + [f"dtheta{i}_{k}" for k in range(4)]
    return cols + ["T", "U", "W", "W_ext", "W_total", "res_hc", "res_theta", "newton_iters"]


class CsvSink:
    """Append-only CSV writer usable as an integration sink."""

    def __init__(self, stream: TextIO, spec: ModelSpec):
        self.stream = stream
        self.writer = csv.writer(stream, lineterminator="\n")
        self.writer.writerow(csv_header(spec))

    def __call__(self, rec: StepRecord):
        nums = [rec.t, rec.h, *rec.y, *rec.y1, rec.T, rec.U, rec.W, rec.W_ext, rec.W_total, rec.res_hc, rec.res_theta]
        self.writer.writerow(["%.17g" % v for v in nums] + [str(rec.newton_iters)])


def read_trajectory_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


@dataclass
class SimulationResult:
    stats: RunStats
    trajectory: TrajectoryRecord
    check: ConsistencyReport
    metadata: dict


def simulate(spec: ModelSpec, sink: Callable | None = None, projection: str | None = None,
             invariants: str | None = None, **control_overrides) -> SimulationResult:
    """Check, project and integrate a model.

    Raises
    ------
    ModelValidationError
        If the constraint Jacobian is rank deficient at the initial state.
    IntegrationError
        On step-size underflow.
    """
    report = check_model(spec)
    if not report.ok:
        raise ModelValidationError(f"constraint rows {report.dependent_rows} are dependent at the initial state")
    system = spec.mechanism()
    control = spec.step_control(**control_overrides)
    proj = spec.projection_config(**({"mode": projection} if projection else {}))
    inv = (invariants or spec.invariants) == "on"
    traj = integrate(system, report.jet, control, proj, invariants=inv, sink=sink)
    meta = {
        "model": spec.name,
        "projection": asdict(proj),
        "integrator": {k: v for k, v in asdict(control).items() if k != "output_times"},
        "invariants": "on" if inv else "off",
        "error_norm": "scaled RMS, scale = atol + rtol * max(|old|, |new|)",
        "initial_correction": report.correction,
    }
    return SimulationResult(traj.stats, traj, report, meta)


STATS_ROWS = [
    ("# succ. (rej.) steps", lambda s: f"{s.succ_steps}({s.rej_steps})"),
    ("projection failures", lambda s: f"{s.proj_failures}"),
    ("Newton: av(max)", lambda s: f"{s.newton_avg:.3g}({s.newton_max})"),
    ("# dist", lambda s: f"{s.n_dist}"),
    ("# proj", lambda s: f"{s.n_proj}"),
    ("# dg", lambda s: f"{s.n_dg}"),
    ("# d2g", lambda s: f"{s.n_d2g}"),
    ("# d3g", lambda s: f"{s.n_d3g}"),
    ("# df_inv", lambda s: f"{s.n_df_inv}"),
    ("# d2f_inv", lambda s: f"{s.n_d2f_inv}"),
    ("wall time [s]", lambda s: f"{s.wall_time:.2f}"),
]


def stats_table(stats: RunStats, title: str = "") -> str:
    width = max(len(k) for k, _ in STATS_ROWS) + 2
    out = [title] if title else []
    out += [f"{k:<{width}}{fmt(stats)}" for k, fmt in STATS_ROWS]
    return "\n".join(out)


def stats_json(result: SimulationResult) -> str:
    return json.dumps({"stats": result.stats.as_dict(), "metadata": result.metadata}, indent=2) + "\n"


__all__ = [
    "BUILTIN_NAMES", "BodySpec", "ConsistencyReport", "CsvSink", "ForcesSpec", "IntegrationError",
    "IntegratorSpec", "JointSpec", "LoadSpec", "MODEL_SCHEMA", "ModelSpec", "ModelValidationError",
    "PlanarBodySpec", "ProjectionError", "ProjectionSpec", "SimulationResult", "check_model", "dumps",
    "lift_model", "load_model", "loads", "restrict_model", "save_model", "simulate", "spec_from_dict",
    "spec_to_dict", "stats_json", "stats_table",
]
