"""Holonomic constraints between rigid bodies.

Three primitives cover every joint in the catalogue:

* ``C``  (coincidence): ``r_j + R_j chi_j - r_i - R_i chi_i = 0``            (3 rows)
* ``SO`` (symmetric orthogonality): ``<R_i a_i, R_j a_j> = 0``              (1 row)
* ``O``  (non-symmetric orthogonality): ``<R_i a_i, d_ij> = 0`` with ``d_ij``
  the C-constraint difference vector                                         (1 row)

Body index 0 is the fixed ground (``r = 0``, ``R = I``); bodies ``1..n`` own
the coordinate blocks ``y[7(k-1):7k]``.  Every primitive is built from
vector fields that are affine in ``r`` and quadratic in ``theta``, so first
and second differentials are exact polynomials.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .body import BODY_COORDS
from .rotation import rotation_tensor

O_DEGENERACY_TOL = 1e-10
JOINT_TYPES = ("spherical", "universal", "revolute", "cylindrical", "translational")
PRIMITIVE_SIZE = {"C": 3, "SO": 1, "O": 1}


class DegenerateGeometryWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ConstraintPrimitive:
    kind: str
    body_i: int
    body_j: int
    chi_i: np.ndarray = field(default_factory=lambda: np.zeros(3))
    chi_j: np.ndarray = field(default_factory=lambda: np.zeros(3))
    a_i: np.ndarray | None = None
    a_j: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in PRIMITIVE_SIZE:
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        if self.body_i == self.body_j:
            raise ValueError("a constraint needs two different bodies")
        for name in ("chi_i", "chi_j", "a_i", "a_j"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.asarray(v, dtype=float).reshape(3))
        needed = {"C": (), "SO": ("a_i", "a_j"), "O": ("a_i",)}[self.kind]
        for name in needed:
            v = getattr(self, name)
            if v is None:
                raise ValueError(f"{self.kind} constraint needs {name}")
            if abs(np.linalg.norm(v) - 1.0) > 1e-12:
                raise ValueError(f"axis {name} must be a unit vector")

    @property
    def size(self) -> int:
        return PRIMITIVE_SIZE[self.kind]


class _Field:
    """``w(y) = sum sign * ([r_b] + R(theta_b) c)`` over a list of terms."""

    def __init__(self, terms):
        self.const = np.zeros(3)
        self.terms = []   # (sign, r offset or None, theta offset, T, c)
        for sign, body, c, with_r in terms:
            c = np.asarray(c, dtype=float)
            if body == 0:
                self.const += sign * c
                continue
            k = BODY_COORDS * (body - 1)
            self.terms.append((sign, k if with_r else None, k + 3, rotation_tensor(c), c))

    def value(self, y):
        w = self.const.copy()
        for sign, r, t, T, c in self.terms:
            th = y[t:t + 4]
            w += sign * ((T @ th) @ th - c)
            if r is not None:
                w += sign * y[r:r + 3]
        return w


def _point_terms(p: ConstraintPrimitive):
    return [(1.0, p.body_j, p.chi_j, True), (-1.0, p.body_i, p.chi_i, True)]


def _fields(prim: ConstraintPrimitive):
    """``(P, Q)``: a C row block is ``P``; SO and O rows are ``<P, Q>``."""
    if prim.kind == "C":
        return _Field(_point_terms(prim)), None
    P = _Field([(1.0, prim.body_i, prim.a_i, False)])
    if prim.kind == "SO":
        return P, _Field([(1.0, prim.body_j, prim.a_j, False)])
    return P, _Field(_point_terms(prim))


class _Stacked:
    """All vector fields of a constraint set evaluated at once.

    Field values ``W`` are ``(n_fields, 3)`` and their Jacobians
    ``(n_fields, 3, N)``; point rows copy a field, scalar rows take the inner
    product of two fields.
    """

    def __init__(self, primitives, n_coords):
        self.N = n_coords
        fields, point_rows, scalar_rows = [], [], []
        row = 0
        for prim in primitives:
            P, Q = _fields(prim)
            fields.append(P)
            if Q is None:
                point_rows.append((row, len(fields) - 1))
            else:
                fields.append(Q)
                scalar_rows.append((row, len(fields) - 2, len(fields) - 1))
            row += prim.size
        self.ell = row
        self.fields = fields
        self.const = np.array([f.const for f in fields]).reshape(-1, 3)
        terms = [(k, *t) for k, f in enumerate(fields) for t in f.terms]
        self.t_field = np.array([t[0] for t in terms], dtype=int)
        self.t_sign = np.array([t[1] for t in terms], dtype=float)
        self.t_r = np.array([-1 if t[2] is None else t[2] for t in terms], dtype=int)
        self.t_theta = np.array([t[3] for t in terms], dtype=int).reshape(-1, 1) + np.arange(4)
        self.t_T = np.array([t[4] for t in terms]).reshape(-1, 3, 4, 4)
        self.t_c = np.array([t[5] for t in terms]).reshape(-1, 3)
        self.has_r = self.t_r >= 0
        self.p_rows = np.array([r + i for r, _ in point_rows for i in range(3)], dtype=int)
        self.p_field = np.array([f for _, f in point_rows], dtype=int)
        self.s_rows = np.array([r for r, _, _ in scalar_rows], dtype=int)
        self.s_P = np.array([p for _, p, _ in scalar_rows], dtype=int)
        self.s_Q = np.array([q for _, _, q in scalar_rows], dtype=int)
        # index grids for scattering theta and r columns
        self._jf = self.t_field[:, None, None]
        self._ji = np.arange(3)[None, :, None]
        self._jt = self.t_theta[:, None, :]
        self._rf = self.t_field[self.has_r]
        self._rc = self.t_r[self.has_r, None] + np.arange(3)

    def _Tv(self, v):
        """``T_t @ v_theta`` for every term, ``(n_terms, 3, 4)``."""
        return np.einsum("tikl,tl->tik", self.t_T, v[self.t_theta])

    def values(self, y):
        Tth = self._Tv(y)
        v = np.einsum("tik,tk->ti", Tth, y[self.t_theta]) - self.t_c
        v[self.has_r] += y[self._rc]
        W = self.const.copy()
        np.add.at(W, self.t_field, self.t_sign[:, None] * v)
        return W, Tth

    def _scatter(self, Tv, with_r):
        J = np.zeros((len(self.fields), 3, self.N))
        np.add.at(J, (self._jf, self._ji, self._jt), 2.0 * self.t_sign[:, None, None] * Tv)
        if with_r and self._rf.size:
            ii = np.arange(3)
            np.add.at(J, (self._rf[:, None], ii[None, :], self._rc), self.t_sign[self.has_r, None])
        return J

    def evaluate(self, y):
        W, Tth = self.values(y)
        return W, self._scatter(Tth, True)

    def residual(self, y):
        W, _ = self.values(y)
        g = np.empty(self.ell)
        g[self.p_rows] = W[self.p_field].ravel()
        g[self.s_rows] = np.einsum("si,si->s", W[self.s_P], W[self.s_Q])
        return g

    def jacobian(self, y, W=None, J=None):
        if W is None:
            W, J = self.evaluate(y)
        out = np.empty((self.ell, self.N))
        out[self.p_rows] = J[self.p_field].reshape(-1, self.N)
        out[self.s_rows] = (np.einsum("si,sin->sn", W[self.s_Q], J[self.s_P])
                            + np.einsum("si,sin->sn", W[self.s_P], J[self.s_Q]))
        return out

    def second_rows(self, y, v):
        W, J = self.evaluate(y)
        D = self._scatter(self._Tv(v), False)
        out = np.empty((self.ell, self.N))
        out[self.p_rows] = D[self.p_field].reshape(-1, self.N)
        JPv, JQv = J[self.s_P] @ v, J[self.s_Q] @ v
        out[self.s_rows] = (np.einsum("si,sin->sn", W[self.s_Q], D[self.s_P])
                            + np.einsum("si,sin->sn", JQv, J[self.s_P])
                            + np.einsum("si,sin->sn", JPv, J[self.s_Q])
                            + np.einsum("si,sin->sn", W[self.s_P], D[self.s_Q]))
        return out

    def weighted_hessian(self, y, w):
        W, J = self.evaluate(y)
        # per-field weight vectors q_f with sum_f <q_f, Hess w_f> collecting every row
        q = np.zeros((len(self.fields), 3))
        q[self.p_field] += w[self.p_rows].reshape(-1, 3)
        ws = w[self.s_rows]
        np.add.at(q, self.s_P, ws[:, None] * W[self.s_Q])
        np.add.at(q, self.s_Q, ws[:, None] * W[self.s_P])
        blocks = 2.0 * self.t_sign[:, None, None] * np.einsum("ti,tikl->tkl", q[self.t_field], self.t_T)
        Hs = np.zeros((self.N, self.N))
        np.add.at(Hs, (self.t_theta[:, :, None], self.t_theta[:, None, :]), blocks)
        cross = np.einsum("s,sin,sim->nm", ws, J[self.s_P], J[self.s_Q])
        return Hs + cross + cross.T


class ConstraintSet:
    """Ordered list of primitives assembled into the system constraint map ``g``."""

    def __init__(self, primitives: Sequence[ConstraintPrimitive], n_bodies: int):
        self.primitives = tuple(primitives)
        self.n_bodies = n_bodies
        self.n_coords = BODY_COORDS * n_bodies
        for p in self.primitives:
            for b in (p.body_i, p.body_j):
                if not 0 <= b <= n_bodies:
                    raise ValueError(f"constraint references body {b}, model has {n_bodies}")
        self._stacked = _Stacked(self.primitives, self.n_coords)
        self._o_fields = [(k, _fields(p)[1]) for k, p in enumerate(self.primitives) if p.kind == "O"]
        self.ell = self._stacked.ell
        self.row_owner = [k for k, p in enumerate(self.primitives) for _ in range(p.size)]
        # C rows are quadratic in y, so their third differential vanishes
        self.has_third_derivative = any(p.kind != "C" for p in self.primitives)

    @property
    def theta_slices(self) -> list[slice]:
        return [slice(BODY_COORDS * i + 3, BODY_COORDS * (i + 1)) for i in range(self.n_bodies)]

    def residual(self, y: np.ndarray) -> np.ndarray:
        return self._stacked.residual(y)

    def jacobian(self, y: np.ndarray) -> np.ndarray:
        return self._stacked.jacobian(y)

    def second_differential(self, y: np.ndarray, v: np.ndarray) -> np.ndarray:
        """``d^2 g (v, v)`` (one entry per row)."""
        return self._stacked.second_rows(y, v) @ v

    def second_differential_rows(self, y: np.ndarray, v: np.ndarray) -> np.ndarray:
        """``ell x N`` matrix whose row ``k`` is ``d^2 g_k (v, .)``."""
        return self._stacked.second_rows(y, v)

    def second_differential_directional(self, y: np.ndarray, v: np.ndarray, w: np.ndarray) -> np.ndarray:
        """``d^2 g (v, .)^T w``, an N-vector."""
        return w @ self._stacked.second_rows(y, v)

    def weighted_hessian(self, y: np.ndarray, w: np.ndarray) -> np.ndarray:
        """``sum_k w_k * Hessian(g_k)``."""
        return self._stacked.weighted_hessian(y, np.asarray(w, dtype=float))

    def o_gaps(self, y: np.ndarray) -> list[tuple[int, float]]:
        """``|d_ij|`` for every O primitive, keyed by primitive index."""
        return [(k, float(np.linalg.norm(Q.value(y)))) for k, Q in self._o_fields]

    def check_geometry(self, y: np.ndarray) -> list[int]:
        """Warn about O primitives sitting on their singular set ``d_ij = 0``."""
        bad = [k for k, gap in self.o_gaps(y) if gap < O_DEGENERACY_TOL]
        if bad:
            warnings.warn(f"O-constraint(s) {bad} have |d_ij| < {O_DEGENERACY_TOL:g}",
                          DegenerateGeometryWarning, stacklevel=2)
        return bad


def make_joint(kind: str, body_i: int, body_j: int, chi_i=None, chi_j=None,
               a_i=None, b_i=None, a_j=None, b_j=None) -> list[ConstraintPrimitive]:
    """Primitive composition of a standard joint.

    SO rows are drawn from ``(a_i, a_j), (b_i, a_j), (a_i, b_j)`` and O rows from
    ``(a_i, d), (b_i, d)``, always taking the leading entries.
    """
    if kind not in JOINT_TYPES:
        raise ValueError(f"unknown joint type {kind!r}; expected one of {JOINT_TYPES}")
    n_so, n_o, has_c = {
        "spherical": (0, 0, True),
        "universal": (1, 0, True),
        "revolute": (2, 0, True),
        "cylindrical": (2, 2, False),
        "translational": (3, 2, False),
    }[kind]
    vectors = {"a_i": a_i, "b_i": b_i, "a_j": a_j, "b_j": b_j}
    so_pairs = [("a_i", "a_j"), ("b_i", "a_j"), ("a_i", "b_j")][:n_so]
    o_axes = ["a_i", "b_i"][:n_o]
    needed = sorted({name for pair in so_pairs for name in pair} | set(o_axes))
    missing = [name for name in needed if vectors[name] is None]
    if missing:
        raise ValueError(f"{kind} joint needs axis vector(s) {', '.join(missing)}")
    chi_i = np.zeros(3) if chi_i is None else chi_i
    chi_j = np.zeros(3) if chi_j is None else chi_j
    out = []
    if has_c:
        out.append(ConstraintPrimitive("C", body_i, body_j, chi_i=chi_i, chi_j=chi_j))
    for u, w in so_pairs:
        out.append(ConstraintPrimitive("SO", body_i, body_j, a_i=vectors[u], a_j=vectors[w]))
    for u in o_axes:
        out.append(ConstraintPrimitive("O", body_i, body_j, chi_i=chi_i, chi_j=chi_j, a_i=vectors[u]))
    return out
