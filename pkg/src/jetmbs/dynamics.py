"""Second-order completion of a consistent jet.

Given ``(t, y, y1)`` on the constrained state space, solve the saddle system

    E d + G^T lam = rhs_top
    G d           = rhs_bottom

with a block-diagonal SPD ``E`` by eliminating ``d`` (Schur complement on the
multipliers), then map ``d`` back to coordinate accelerations ``y2``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, cg

from .body import SystemJet, block_operators


class ConstraintDegeneracyError(np.linalg.LinAlgError):
    """The constraint Jacobian lost row rank; ``rows`` lists dependent rows."""

    def __init__(self, message: str, rows: list[int]):
        super().__init__(message)
        self.rows = rows


@dataclass(frozen=True)
class SaddleSystem:
    E: np.ndarray
    G: np.ndarray
    rhs_top: np.ndarray
    rhs_bottom: np.ndarray
    block_size: int = 6

    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        """Full ``(n + ell)`` square matrix and right-hand side."""
        ell = self.G.shape[0]
        K = np.block([[self.E, self.G.T], [self.G, np.zeros((ell, ell))]])
        return K, np.concatenate([self.rhs_top, self.rhs_bottom])


@dataclass(frozen=True)
class DistributionResult:
    """Accelerations, multipliers and the intermediate solve vector.

    ``constraint_defect`` and ``theta_defect`` are the max-norms of the
    differentiated constraints ``dg y2 + d2g(y1, y1)`` and
    ``<theta, theta2> + |theta1|^2``, evaluated at the input point.
    """

    y2: np.ndarray
    lam: np.ndarray
    d: np.ndarray
    constraint_defect: float = 0.0
    theta_defect: float = 0.0


class _BlockSolver:
    """Per-block Cholesky factors of a block-diagonal SPD matrix."""

    def __init__(self, E: np.ndarray, bs: int):
        self.bs = bs
        self.factors = [sla.cho_factor(E[k:k + bs, k:k + bs]) for k in range(0, E.shape[0], bs)]

    def solve(self, b: np.ndarray) -> np.ndarray:
        out = np.empty_like(b, dtype=float)
        for n, f in enumerate(self.factors):
            s = slice(n * self.bs, (n + 1) * self.bs)
            out[s] = sla.cho_solve(f, b[s])
        return out


def dependent_rows(G: np.ndarray, rtol: float = 1e-10) -> list[int]:
    """Rows of ``G`` that are (numerically) combinations of earlier-pivoted rows."""
    if G.shape[0] == 0:
        return []
    _, R, piv = sla.qr(G.T, pivoting=True, mode="economic")
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rtol * max(diag[0], 1e-300)))
    return sorted(int(p) for p in piv[rank:])


def schur_solve(sys: SaddleSystem, method: str = "direct", cg_rtol: float = 1e-13, refine: int = 2):
    """Solve the saddle system; returns ``(d, lam)``.

    ``method="cg"`` solves the multiplier system by conjugate gradients on
    ``-S`` instead of a dense Cholesky factorisation.  ``refine`` rounds of
    iterative refinement on the full system reuse the factorisations; they
    matter when the multipliers are large compared to the accelerations.
    """
    Es = _BlockSolver(sys.E, sys.block_size)
    G = sys.G
    ell = G.shape[0]
    if ell == 0:
        return Es.solve(sys.rhs_top), np.zeros(0)
    EinvGT = Es.solve(G.T)
    negS = G @ EinvGT   # -S = G E^-1 G^T, SPD when G has full row rank
    if method == "direct":
        try:
            factor = sla.cho_factor(negS)
        except np.linalg.LinAlgError:
            factor = None
        # squared diagonal ratio of the Cholesky factor bounds the condition number from below
        diag = np.abs(np.diag(factor[0])) if factor is not None else np.zeros(1)
        if factor is None or (diag.min() / diag.max()) ** 2 < 1e-14:
            rows = dependent_rows(G)
            raise ConstraintDegeneracyError(f"singular Schur complement; dependent constraint rows {rows}", rows)

        def schur(v1):
            return -sla.cho_solve(factor, v1)
    elif method == "cg":
        op = LinearOperator((ell, ell), matvec=lambda x: negS @ x, dtype=float)

        def schur(v1):
            x, info = cg(op, -v1, rtol=cg_rtol, atol=0.0, maxiter=10 * ell)
            if info != 0:
                rows = dependent_rows(G)
                raise ConstraintDegeneracyError(f"CG on the Schur complement did not converge (info={info})", rows)
            return x
    else:
        raise ValueError(f"unknown Schur method {method!r}")

    def solve(top, bottom):
        u1 = Es.solve(top)
        v2 = schur(G @ u1 - bottom)
        return u1 + EinvGT @ v2, -v2

    d, lam = solve(sys.rhs_top, sys.rhs_bottom)
    for _ in range(refine):
        dd, dl = solve(sys.rhs_top - sys.E @ d - G.T @ lam, sys.rhs_bottom - G @ d)
        d, lam = d + dd, lam + dl
    return d, lam


def assemble_saddle(system, jet: SystemJet) -> SaddleSystem:
    """Saddle system of a 3D mechanism at ``jet``."""
    return _assemble(system, jet)[0]


def _assemble(system, jet):
    ops = block_operators(system.bodies, jet)
    cons = system.constraints
    dg = cons.jacobian(jet.y)
    top = (system.forces.external_vector(len(system.bodies)) - 8.0 * ops.Ktilde
           - ops.H @ system.forces.potential_gradient(system.bodies, jet.y))
    d2g = cons.second_differential(jet.y, jet.y1)
    bottom = dg @ (ops.I_op @ jet.y) - d2g
    sys = SaddleSystem(E=ops.E, G=dg @ ops.H.T, rhs_top=top, rhs_bottom=bottom, block_size=6)
    return sys, ops, dg, d2g


def distribution(system, jet: SystemJet, method: str = "direct", check_tol: float | None = None) -> DistributionResult:
    """Accelerations ``y2`` and multipliers at a consistent jet.

    If ``check_tol`` is given, a warning is issued when the input constraint
    residual exceeds ten times that tolerance.
    """
    if check_tol is not None:
        res = np.abs(system.constraints.residual(jet.y)).max(initial=0.0)
        if res > 10 * check_tol:
            warnings.warn(f"distribution evaluated off the constraint manifold (|g| = {res:.2e})", stacklevel=2)
    sys, ops, dg, d2g = _assemble(system, jet)
    d, lam = schur_solve(sys, method=method)
    y2 = ops.H.T @ d - ops.I_op @ jet.y
    cdef = np.abs(dg @ y2 + d2g).max(initial=0.0)
    tdef = max((abs(jet.y[s] @ y2[s] + jet.y1[s] @ jet.y1[s]) for s in system.theta_slices), default=0.0)
    return DistributionResult(y2=y2, lam=lam, d=d, constraint_defect=float(cdef), theta_defect=float(tdef))
