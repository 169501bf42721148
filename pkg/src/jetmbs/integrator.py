"""Dormand-Prince 5(4) on the jet space with projected stages.

Each stage point is pulled back onto the theta and constraint manifolds
(quasi-orthogonal cascade) before the distribution is evaluated there.  The
fifth- and fourth-order results are both projected fully, invariants
included, and the error estimate is taken between the two projected points.
FSAL reuse is off: the projection moves the end point, so the last stage
derivative no longer belongs to it.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .body import SystemJet
from .dynamics import ConstraintDegeneracyError
from .projection import (
    EVAL_KEYS,
    ProjectionConfig,
    ProjectionError,
    ProjectionReport,
    project_full,
    residual_families,
)
from .system import EnergyInvariant

C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


@dataclass(frozen=True)
class StepControl:
    """Step-size controller settings.

    ``output_times`` (optional, increasing) are hit exactly by shortening the
    step that would cross them, so runs with different settings can be
    compared pointwise.  ``work_quadrature`` selects how the work of the
    external loads is accumulated: ``"rk"`` applies the fifth-order weights to
    the load power at the stage points, ``"trapezoid"`` averages the end
    point powers of each accepted step.
    """

    atol: float = 1e-6
    rtol: float = 1e-6
    h0: float = 0.25
    fac_max: float = 3.0
    fac_min: float = 0.2
    safety: float = 0.9
    t_end: float = 10.0
    output_times: tuple = ()
    work_quadrature: str = "rk"

    def __post_init__(self):
        if not (0 < self.fac_min < 1 < self.fac_max):
            raise ValueError("need 0 < fac_min < 1 < fac_max")
        if not (self.atol > 0 and self.rtol > 0):
            raise ValueError("atol and rtol must be positive")
        if not (self.h0 > 0 and self.t_end > 0):
            raise ValueError("h0 and t_end must be positive")
        if not 0 < self.safety <= 1:
            raise ValueError("safety must lie in (0, 1]")
        if self.work_quadrature not in ("rk", "trapezoid"):
            raise ValueError(f"unknown work quadrature {self.work_quadrature!r}")
        object.__setattr__(self, "output_times", tuple(float(t) for t in self.output_times))


@dataclass
class RunStats:
    succ_steps: int = 0
    rej_steps: int = 0
    proj_failures: int = 0
    newton_avg: float = 0.0
    newton_max: int = 0
    n_dist: int = 0
    n_proj: int = 0
    n_dg: int = 0
    n_d2g: int = 0
    n_d3g: int = 0
    n_df_inv: int = 0
    n_d2f_inv: int = 0
    wall_time: float = 0.0
    max_constraint_defect: float = 0.0
    max_theta_defect: float = 0.0
    _newton_total: int = field(default=0, repr=False)

    def absorb(self, report: ProjectionReport):
        self.n_proj += 1
        self._newton_total += report.newton_iterations
        self.newton_max = max(self.newton_max, report.newton_iterations)
        self.newton_avg = self._newton_total / self.n_proj
        for key in EVAL_KEYS:
            setattr(self, f"n_{key}", getattr(self, f"n_{key}") + report.differential_evals[key])

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("_newton_total")
        return d


@dataclass(frozen=True)
class StepRecord:
    t: float
    h: float
    y: np.ndarray
    y1: np.ndarray
    T: float
    U: float
    W: float
    W_ext: float
    W_total: float
    res_hc: float
    res_theta: float
    newton_iters: int


@dataclass
class TrajectoryRecord:
    records: list = field(default_factory=list)
    stats: RunStats = field(default_factory=RunStats)
    control: StepControl | None = None
    projection: ProjectionConfig | None = None
    invariants: bool = True

    @property
    def t(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    @property
    def y(self) -> np.ndarray:
        return np.array([r.y for r in self.records])

    @property
    def y1(self) -> np.ndarray:
        return np.array([r.y1 for r in self.records])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def at(self, t: float) -> StepRecord:
        """Record whose time equals ``t`` (to 1e-12)."""
        for r in self.records:
            if abs(r.t - t) <= 1e-12 * max(1.0, abs(t)):
                return r
        raise KeyError(f"no record at t = {t}")


class IntegrationError(RuntimeError):
    def __init__(self, message: str, report: ProjectionReport | None = None):
        super().__init__(message)
        self.report = report


@dataclass
class StepResult:
    accepted: bool
    jet: SystemJet | None
    err: float
    reports: list
    failure: str | None = None
    w_ext: float = 0.0


class _Evaluator:
    """Distribution calls with defect bookkeeping."""

    def __init__(self, system, stats: RunStats):
        self.system = system
        self.stats = stats

    def __call__(self, jet: SystemJet) -> np.ndarray:
        res = self.system.distribution(jet)
        s = self.stats
        s.n_dist += 1
        s.max_constraint_defect = max(s.max_constraint_defect, res.constraint_defect)
        s.max_theta_defect = max(s.max_theta_defect, res.theta_defect)
        return res.y2


def error_norm(old: np.ndarray, new: np.ndarray, other: np.ndarray, atol: float, rtol: float) -> float:
    scale = atol + rtol * np.maximum(np.abs(old), np.abs(new))
    with np.errstate(over="ignore"):   # an infinite error simply rejects the step
        return float(np.sqrt(np.mean(((new - other) / scale) ** 2)))


def step(system, jet: SystemJet, h: float, control: StepControl, proj: ProjectionConfig,
         target: float | None = None, w_ext: float = 0.0, power_prev: float = 0.0,
         evaluate: Callable | None = None) -> StepResult:
    """One embedded step from the consistent jet ``jet``.

    ``w_ext`` and ``power_prev`` are the load work and power at ``jet``.  If
    ``target`` is given, the two end points are also projected onto
    ``W_total = target``.  A projection or degeneracy failure yields
    ``accepted=False`` with ``failure`` set instead of raising.
    """
    evaluate = evaluate or _Evaluator(system, RunStats())
    stage_cfg = replace(proj, mode="quasi")
    loaded = system.has_loads
    reports = []
    p0 = np.concatenate([jet.y, jet.y1])
    n = jet.y.size
    ks, powers = [], []
    try:
        for s in range(7):
            if s == 0:
                point = jet
            else:
                q = p0 + h * sum(a * k for a, k in zip(A[s], ks))
                point, rep = project_full(SystemJet(jet.t + C[s] * h, q[:n], q[n:]), system, stage_cfg)
                reports.append(rep)
            ks.append(np.concatenate([point.y1, evaluate(point)]))
            if loaded:
                powers.append(system.power(point))
        if not loaded:
            w_new, inv = w_ext, None
        elif control.work_quadrature == "rk":
            w_new, inv = w_ext + h * float(B5 @ np.array(powers)), None
        else:
            w_new, inv = None, EnergyInvariant(system, target, w_ext, power_prev, h) if target is not None else None
        if inv is None and target is not None:
            inv = EnergyInvariant(system, target, w_new)
        ends = []
        for b in (B5, B4):
            q = p0 + h * sum(w * k for w, k in zip(b, ks))
            end, rep = project_full(SystemJet(jet.t + h, q[:n], q[n:]), system, proj, f_inv=inv)
            reports.append(rep)
            ends.append(end)
    except (ProjectionError, ConstraintDegeneracyError) as exc:
        return StepResult(False, None, np.inf, reports, failure=str(exc))
    j5, j4 = ends
    if w_new is None:
        w_new = w_ext + 0.5 * h * (power_prev + system.power(j5))
    new = np.concatenate([j5.y, j5.y1])
    err = error_norm(p0, new, np.concatenate([j4.y, j4.y1]), control.atol, control.rtol)
    return StepResult(err <= 1.0, j5, err, reports, w_ext=w_new)


def _record(system, jet: SystemJet, h: float, w_ext: float, newton: int) -> StepRecord:
    e = system.energies(jet, w_ext)
    res = residual_families(system, jet)
    return StepRecord(
        t=jet.t, h=h, y=jet.y.copy(), y1=jet.y1.copy(), T=e.T, U=e.U, W=e.W, W_ext=w_ext,
        W_total=e.W_total, res_hc=res["hc"], res_theta=res["theta"], newton_iters=newton,
    )


def _next_stop(t: float, control: StepControl) -> float:
    for to in control.output_times:
        if to > t + 1e-12 * max(1.0, abs(to)):
            return min(to, control.t_end)
    return control.t_end


def integrate(system, jet0: SystemJet, control: StepControl, proj: ProjectionConfig | None = None,
              invariants: bool = True, sink: Callable | None = None, fixed_step: bool = False) -> TrajectoryRecord:
    """Adaptive integration from ``jet0`` to ``control.t_end``.

    With ``fixed_step=True`` every step of size ``h0`` is accepted regardless
    of the error estimate (used for convergence studies).  ``sink`` receives
    each ``StepRecord`` as soon as it is appended.

    Raises
    ------
    IntegrationError
        When the step size underflows ``1e-12 * t_end``.
    """
    proj = proj or ProjectionConfig()
    out = TrajectoryRecord(control=control, projection=proj, invariants=invariants)
    stats = out.stats
    start = time.perf_counter()
    evaluate = _Evaluator(system, stats)

    def emit(rec):
        out.records.append(rec)
        if sink is not None:
            sink(rec)

    jet = jet0
    res0 = residual_families(system, jet)
    if max(res0.values()) > proj.tol_abs:
        jet, rep = project_full(jet, system, proj)
        stats.absorb(rep)
    w_ext = 0.0
    target = system.energies(jet, 0.0).W_total
    p_prev = system.power(jet)
    emit(_record(system, jet, 0.0, w_ext, 0))

    h = min(control.h0, control.t_end)
    h_min = 1e-12 * control.t_end
    t = jet.t
    while t < control.t_end - h_min:
        stop = _next_stop(t, control)
        h_try = min(h, stop - t)
        clamped = h_try < h
        res = step(system, jet, h_try, control, proj, target if invariants else None, w_ext, p_prev, evaluate)
        for rep in res.reports:
            stats.absorb(rep)
        if res.failure is not None:
            stats.proj_failures += 1
            last = res.reports[-1] if res.reports else None
            h = 0.5 * h_try
            if h < h_min:
                raise IntegrationError(f"step size underflow at t = {t:.6g} after failure: {res.failure}", last)
            continue
        fac = control.fac_max if res.err == 0 else control.safety * res.err ** -0.2
        fac = min(control.fac_max, max(control.fac_min, fac))
        if res.accepted or fixed_step:
            stats.succ_steps += 1
            w_ext = res.w_ext
            p_prev = system.power(res.jet)
            jet = res.jet
            t = jet.t
            newton = sum(r.newton_iterations for r in res.reports)
            emit(_record(system, jet, h_try, w_ext, newton))
            if fixed_step:
                continue
            # a step cut short by an output time should not shrink the controller state
            h = max(h, h_try * fac) if clamped else h_try * fac
        else:
            stats.rej_steps += 1
            h = h_try * min(1.0, fac)
            if h < h_min:
                raise IntegrationError(f"step size underflow at t = {t:.6g} (err = {res.err:.3g})",
                                       res.reports[-1] if res.reports else None)
    stats.wall_time = time.perf_counter() - start
    return out
