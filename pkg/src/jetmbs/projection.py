"""Projection of nearby jets onto the constrained (and invariant) state space.

Three manifolds are involved: unit Euler parameters with tangent velocities,
the holonomic constraints ``g(y) = 0, dg y1 = 0``, and an optional invariant
set such as constant total energy.  The default *quasi-orthogonal* cascade
normalises ``theta``, runs Newton on the position system

    y + dg^T mu - a = 0,   g(y) = 0

and then solves the linear velocity system

    y1 + dg^T alpha - a1 = 0,   dg y1 = 0.

The *orthogonal* mode replaces both steps by Newton on the full first-order
optimality systems.  The cascade repeats until every residual family and
the per-sweep displacement are below ``tol_abs``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import gmres

from .body import SystemJet
from .rotation import EulerState

EVAL_KEYS = ("dg", "d2g", "d3g", "df_inv", "d2f_inv")
THETA_NEWTON_TOL = 1e-13
EXACT_TOL = 1e-13   # residuals below this are treated as already on the manifold


@dataclass(frozen=True)
class ProjectionConfig:
    """Tolerances and caps for the projection loops.

    ``forcing > 0`` solves each Newton linear system only to that relative
    residual (GMRES) instead of directly.  With ``polish`` a Newton loop
    whose input already meets ``tol_abs`` still takes one correction (unless
    the residual is at rounding level), so projected points are consistent
    to roughly ``tol_abs**2`` rather than just ``tol_abs``.
    """

    tol_abs: float = 1e-5
    max_outer: int = 20
    max_newton: int = 50
    forcing: float = 0.0
    mode: str = "quasi"
    polish: bool = True

    def __post_init__(self):
        if not self.tol_abs > 0:
            raise ValueError("tol_abs must be positive")
        if self.max_outer < 1 or self.max_newton < 1:
            raise ValueError("iteration caps must be at least 1")
        if not 0 <= self.forcing < 1:
            raise ValueError("forcing must lie in [0, 1)")
        if self.mode not in ("quasi", "orthogonal"):
            raise ValueError(f"unknown projection mode {self.mode!r}")


@dataclass
class ProjectionReport:
    newton_iterations: int = 0
    outer_sweeps: int = 0
    converged: bool = False
    final_residual: dict = field(default_factory=dict)
    differential_evals: dict = field(default_factory=lambda: dict.fromkeys(EVAL_KEYS, 0))

    def count(self, key: str, n: int = 1):
        self.differential_evals[key] += n


class ProjectionError(RuntimeError):
    def __init__(self, message: str, report: ProjectionReport):
        super().__init__(message)
        self.report = report


class _Counted:
    """Routes differential evaluations through the report counters."""

    def __init__(self, constraints, report: ProjectionReport):
        self.c = constraints
        self.report = report

    def residual(self, y):
        return self.c.residual(y)

    def jacobian(self, y):
        self.report.count("dg")
        return self.c.jacobian(y)

    def second_rows(self, y, v):
        self.report.count("d2g")
        return self.c.second_differential_rows(y, v)

    def second_directional(self, y, v, w):
        self.report.count("d2g")
        return self.c.second_differential_directional(y, v, w)

    def weighted_hessian(self, y, w):
        self.report.count("d2g")
        return self.c.weighted_hessian(y, w)


def _linear_solve(K: np.ndarray, rhs: np.ndarray, forcing: float) -> np.ndarray:
    if forcing > 0:
        x, info = gmres(K, rhs, rtol=forcing, atol=0.0, restart=K.shape[0])
        if info == 0:
            return x
    return np.linalg.solve(K, rhs)


def _inf(*arrays) -> float:
    return max((float(np.abs(a).max()) for a in arrays if np.size(a)), default=0.0)


# -- Euler parameters ------------------------------------------------------

def project_theta(a, a1) -> EulerState:
    """Normalise ``a`` and remove the normal component of ``a1``.

    Inputs already on the tangent bundle to rounding are returned unchanged,
    which makes the map exactly idempotent.
    """
    a = np.asarray(a, dtype=float)
    a1 = np.asarray(a1, dtype=float)
    na = np.linalg.norm(a)
    if na < 1e-12:
        raise ValueError("cannot project a (near) zero vector onto S^3")
    eps = 4 * np.finfo(float).eps
    theta = a.copy() if abs(na - 1.0) <= eps else a / na
    c = a1 @ theta
    theta1 = a1.copy() if abs(c) <= eps * max(1.0, np.linalg.norm(a1)) else a1 - c * theta
    return EulerState(theta, theta1)


def project_theta_orthogonal(a, a1, max_iter: int = 50) -> tuple[EulerState, int]:
    """Orthogonal projection of ``(a, a1)`` onto the tangent bundle of S^3 (Newton)."""
    a = np.asarray(a, dtype=float)
    a1 = np.asarray(a1, dtype=float)
    start = project_theta(a, a1)
    th, th1 = start.theta, start.theta1
    mu1, mu2 = np.linalg.norm(a) - 1.0, float(a1 @ th)
    I4 = np.eye(4)
    for it in range(max_iter + 1):
        F = np.concatenate([
            th + mu1 * th + mu2 * th1 - a,
            th1 + mu2 * th - a1,
            [th @ th - 1.0, th @ th1],
        ])
        if np.abs(F).max() <= THETA_NEWTON_TOL:
            return EulerState(th, th1), it
        if it == max_iter:
            break
        J = np.zeros((10, 10))
        J[0:4, 0:4] = (1 + mu1) * I4
        J[0:4, 4:8] = mu2 * I4
        J[0:4, 8] = th
        J[0:4, 9] = th1
        J[4:8, 0:4] = mu2 * I4
        J[4:8, 4:8] = I4
        J[4:8, 9] = th
        J[8, 0:4] = 2 * th
        J[9, 0:4] = th1
        J[9, 4:8] = th
        dx = np.linalg.solve(J, -F)
        th, th1 = th + dx[0:4], th1 + dx[4:8]
        mu1, mu2 = mu1 + dx[8], mu2 + dx[9]
    raise ValueError("orthogonal projection onto TS^3 did not converge")


def _theta_step(jet: SystemJet, theta_slices, orthogonal: bool, report: ProjectionReport) -> SystemJet:
    if not theta_slices:
        return jet
    y, y1 = jet.y.copy(), jet.y1.copy()
    for s in theta_slices:
        if orthogonal:
            st, it = project_theta_orthogonal(y[s], y1[s])
            report.newton_iterations += it
        else:
            st = project_theta(y[s], y1[s])
        y[s], y1[s] = st.theta, st.theta1
    return jet.with_values(y=y, y1=y1)


def theta_residual(theta_slices, y, y1) -> np.ndarray:
    return np.array([v for s in theta_slices for v in (y[s] @ y[s] - 1.0, y[s] @ y1[s])])


# -- holonomic constraints ---------------------------------------------------

def _project_positions(a, cons: _Counted, cfg: ProjectionConfig, report: ProjectionReport, theta_slices=()):
    N = a.size
    y = a.copy()
    mu = None
    for it in range(cfg.max_newton + 1):
        g = cons.residual(y)
        dg = cons.jacobian(y)
        dgt = tangent_jacobian(dg, y, theta_slices)
        F1 = np.zeros(N) if mu is None else y + dgt.T @ mu - a
        res = _inf(F1, g)
        if res <= cfg.tol_abs and (mu is not None or not cfg.polish or res <= EXACT_TOL):
            return y, dg
        if it == cfg.max_newton:
            break
        ell = g.size
        A = np.eye(N)
        if mu is not None:
            A = A + cons.weighted_hessian(y, mu)
        K = np.block([[A, dgt.T], [dg, np.zeros((ell, ell))]])
        step = _linear_solve(K, -np.concatenate([F1, g]), cfg.forcing)
        y = y + step[:N]
        mu = step[N:] if mu is None else mu + step[N:]
        report.newton_iterations += 1
    report.final_residual["hc"] = _inf(g)
    raise ProjectionError(f"position projection did not converge in {cfg.max_newton} Newton iterations", report)


def tangent_jacobian(dg: np.ndarray, y: np.ndarray, theta_slices) -> np.ndarray:
    """``dg`` with the radial part of every theta column block removed."""
    out = dg.copy()
    for s in theta_slices:
        th = y[s] / np.linalg.norm(y[s])
        out[:, s] -= np.outer(out[:, s] @ th, th)
    return out


def velocity_projection(dg: np.ndarray, a1: np.ndarray):
    """Solve ``y1 + dg^T alpha = a1, dg y1 = 0`` (linear); returns ``(y1, alpha)``."""
    if dg.shape[0] == 0:
        return a1.copy(), np.zeros(0)
    alpha = np.linalg.solve(dg @ dg.T, dg @ a1)
    return a1 - dg.T @ alpha, alpha


def project_hc(jet: SystemJet, constraints, cfg: ProjectionConfig, report: ProjectionReport | None = None):
    """Quasi-orthogonal projection onto the holonomic constraint manifold.

    Returns ``(jet', alpha, report)`` where ``alpha`` are the multipliers of
    the velocity system.

    Raises
    ------
    ProjectionError
        If the Newton iteration on the positions does not converge.
    """
    report = ProjectionReport() if report is None else report
    cons = _Counted(constraints, report)
    y, dg = _project_positions(jet.y, cons, cfg, report, constraints.theta_slices)
    y1, alpha = velocity_projection(tangent_jacobian(dg, y, constraints.theta_slices), jet.y1)
    return jet.with_values(y=y, y1=y1), alpha, report


def _third_term(cons: _Counted, y, y1, alpha, h=1e-6):
    """Jacobian of ``y -> d2g(y1, .)^T alpha`` by central differences."""
    cons.report.count("d3g")
    N = y.size
    out = np.zeros((N, N))
    for m in range(N):
        step = h * (1.0 + abs(y[m]))
        e = np.zeros(N)
        e[m] = step
        out[:, m] = (cons.c.second_differential_directional(y + e, y1, alpha)
                     - cons.c.second_differential_directional(y - e, y1, alpha)) / (2 * step)
    return out


class WithTheta:
    """Constraint set extended by the rows ``|theta_i|^2 - 1`` of every body.

    The velocity rows of the extension are ``2 <theta_i, theta1_i>``, so a
    projection onto ``g = 0, dg y1 = 0`` for the extended set lands on the
    constraint and Euler-parameter manifolds at once.
    """

    def __init__(self, constraints):
        self.c = constraints
        self.slices = list(constraints.theta_slices)
        self.ell = constraints.ell + len(self.slices)
        self.has_third_derivative = constraints.has_third_derivative
        self.theta_slices = self.slices

    def residual(self, y):
        return np.concatenate([self.c.residual(y), [y[s] @ y[s] - 1.0 for s in self.slices]])

    def _rows(self, v):
        out = np.zeros((len(self.slices), v.size))
        for k, s in enumerate(self.slices):
            out[k, s] = 2.0 * v[s]
        return out

    def jacobian(self, y):
        return np.vstack([self.c.jacobian(y), self._rows(y)])

    def second_differential_rows(self, y, v):
        return np.vstack([self.c.second_differential_rows(y, v), self._rows(v)])

    def second_differential_directional(self, y, v, w):
        return w @ self.second_differential_rows(y, v)

    def weighted_hessian(self, y, w):
        out = self.c.weighted_hessian(y, w[:self.c.ell])
        for k, s in enumerate(self.slices):
            out[s, s] += 2.0 * w[self.c.ell + k] * np.eye(s.stop - s.start)
        return out


def project_hc_orthogonal(jet: SystemJet, constraints, cfg: ProjectionConfig,
                          report: ProjectionReport | None = None):
    """Orthogonal projection onto ``g = 0, dg y1 = 0`` by Newton on the optimality system.

    The unit-norm rows of the Euler parameters are solved together with the
    constraints, so the result is the orthogonal projection onto the
    intersection with the Euler-parameter manifold.
    """
    report = ProjectionReport() if report is None else report
    if constraints.theta_slices and not isinstance(constraints, WithTheta):
        constraints = WithTheta(constraints)
    cons = _Counted(constraints, report)
    a, a1 = jet.y, jet.y1
    N, ell = a.size, constraints.ell
    y, y1 = a.copy(), a1.copy()
    alpha, beta = np.zeros(ell), np.zeros(ell)
    I = np.eye(N)
    for it in range(cfg.max_newton + 1):
        g = cons.residual(y)
        dg = cons.jacobian(y)
        rows = cons.second_rows(y, y1)
        F = np.concatenate([
            y + rows.T @ alpha + dg.T @ beta - a,
            y1 + dg.T @ alpha - a1,
            dg @ y1,
            g,
        ])
        res = float(np.abs(F).max(initial=0.0))
        if res <= cfg.tol_abs and (it > 0 or not cfg.polish or res <= EXACT_TOL):
            return jet.with_values(y=y, y1=y1), report
        if it == cfg.max_newton:
            break
        nz_a, nz_b = np.any(alpha), np.any(beta)
        Ha = cons.weighted_hessian(y, alpha) if nz_a else np.zeros((N, N))
        Hb = cons.weighted_hessian(y, beta) if nz_b else np.zeros((N, N))
        top = I + Hb
        if nz_a and constraints.has_third_derivative:
            top = top + _third_term(cons, y, y1, alpha)
        Z = np.zeros
        J = np.block([
            [top, Ha, rows.T, dg.T],
            [Ha, I, dg.T, Z((N, ell))],
            [rows, dg, Z((ell, ell)), Z((ell, ell))],
            [dg, Z((ell, N)), Z((ell, ell)), Z((ell, ell))],
        ])
        dx = _linear_solve(J, -F, cfg.forcing)
        y, y1 = y + dx[:N], y1 + dx[N:2 * N]
        alpha, beta = alpha + dx[2 * N:2 * N + ell], beta + dx[2 * N + ell:]
        report.newton_iterations += 1
    report.final_residual["hc"] = float(np.abs(F).max())
    raise ProjectionError(f"orthogonal constraint projection did not converge in {cfg.max_newton} iterations", report)


# -- invariants --------------------------------------------------------------

def state_tangent_projector(system, y, y1, report: ProjectionReport | None = None) -> np.ndarray:
    """Orthogonal projector of ``(y, y1)`` space onto the tangent space of M_theta and M_hc."""
    cons = system.constraints
    N = y.size
    if report is not None:
        report.count("dg")
        report.count("d2g")
    dg = cons.jacobian(y)
    rows = [np.hstack([dg, np.zeros_like(dg)]),
            np.hstack([cons.second_differential_rows(y, y1), dg])]
    for s in system.theta_slices:
        a = np.zeros((2, 2 * N))
        a[0, s] = 2.0 * y[s]
        a[1, s] = y1[s]
        a[1, N + s.start:N + s.stop] = y[s]
        rows.append(a)
    Phi = np.vstack(rows)
    if Phi.shape[0] == 0:
        return np.eye(2 * N)
    coef = np.linalg.lstsq(Phi @ Phi.T, Phi, rcond=None)[0]
    return np.eye(2 * N) - Phi.T @ coef


def project_invariants(jet: SystemJet, f_inv, cfg: ProjectionConfig, report: ProjectionReport | None = None,
                       system=None):
    """Newton on ``p + D^T mu - a = 0, f(p) = 0`` for ``p = (y, y1)``; returns ``(jet', report)``.

    ``D = df`` by default.  When ``system`` is given, ``D`` is ``df``
    projected onto the tangent space of the theta and constraint manifolds,
    so the correction does not push the point off them at first order.
    """
    report = ProjectionReport() if report is None else report
    N = jet.y.size
    a = np.concatenate([jet.y, jet.y1])
    p = a.copy()
    mu = None
    for it in range(cfg.max_newton + 1):
        f = f_inv.value(p[:N], p[N:])
        if mu is None and np.abs(f).max() <= (EXACT_TOL if cfg.polish else cfg.tol_abs):
            return jet, report
        report.count("df_inv")
        J = f_inv.jacobian(p[:N], p[N:])
        D = J if system is None else J @ state_tangent_projector(system, p[:N], p[N:], report)
        F1 = np.zeros(2 * N) if mu is None else p + D.T @ mu - a
        if _inf(F1, f) <= cfg.tol_abs and (mu is not None or not cfg.polish):
            return jet.with_values(y=p[:N], y1=p[N:]), report
        if it == cfg.max_newton:
            break
        A = np.eye(2 * N)
        if mu is not None:
            report.count("d2f_inv")
            A = A + f_inv.weighted_hessian(p[:N], p[N:], mu)
        r = f.size
        K = np.block([[A, D.T], [J, np.zeros((r, r))]])
        step = _linear_solve(K, -np.concatenate([F1, f]), cfg.forcing)
        p = p + step[:2 * N]
        mu = step[2 * N:] if mu is None else mu + step[2 * N:]
        report.newton_iterations += 1
    report.final_residual["inv"] = float(np.abs(f).max())
    raise ProjectionError(f"invariant projection did not converge in {cfg.max_newton} Newton iterations", report)


# -- combined ------------------------------------------------------------------

def residual_families(system, jet: SystemJet, f_inv=None, report: ProjectionReport | None = None) -> dict:
    """Max-norm residual of each manifold family at ``jet``."""
    cons = system.constraints
    if report is not None:
        report.count("dg")
    out = {
        "theta": _inf(theta_residual(system.theta_slices, jet.y, jet.y1)),
        "hc": _inf(cons.residual(jet.y), cons.jacobian(jet.y) @ jet.y1),
    }
    if f_inv is not None:
        out["inv"] = _inf(f_inv.value(jet.y, jet.y1))
    return out


def project_full(jet: SystemJet, system, cfg: ProjectionConfig, f_inv=None,
                 report: ProjectionReport | None = None, mode: str | None = None):
    """Cycle theta -> constraints -> invariants until everything is within ``tol_abs``.

    Each sweep ends with a theta normalisation so that returned points carry
    exactly unit Euler parameters.  Returns ``(jet', report)``.

    Raises
    ------
    ProjectionError
        On Newton failure inside a sweep or when ``max_outer`` sweeps do not
        converge.
    """
    report = ProjectionReport() if report is None else report
    mode = cfg.mode if mode is None else mode
    orthogonal = mode == "orthogonal"
    hc = project_hc_orthogonal if orthogonal else (lambda j, c, k, r: project_hc(j, c, k, r)[::2])
    scale = 1.0 + np.abs(np.concatenate([jet.y, jet.y1]))
    p = _theta_step(jet, system.theta_slices, orthogonal, report)
    for sweep in range(1, cfg.max_outer + 1):
        prev = np.concatenate([p.y, p.y1])
        p, _ = hc(p, system.constraints, cfg, report)
        if f_inv is not None:
            p, _ = project_invariants(p, f_inv, cfg, report, system=system)
        p = _theta_step(p, system.theta_slices, orthogonal, report)
        report.outer_sweeps = sweep
        res = residual_families(system, p, f_inv, report)
        report.final_residual = res
        disp = np.abs(np.concatenate([p.y, p.y1]) - prev) / scale
        if max(res.values()) <= cfg.tol_abs and disp.max() <= cfg.tol_abs:
            report.converged = True
            return p, report
    raise ProjectionError(f"projection cascade did not converge in {cfg.max_outer} sweeps ({res})", report)


def project_orthogonal(jet: SystemJet, system, cfg: ProjectionConfig, f_inv=None,
                       report: ProjectionReport | None = None):
    """Reference projection: the cascade with orthogonal theta and constraint steps."""
    return project_full(jet, system, cfg, f_inv=f_inv, report=report, mode="orthogonal")
