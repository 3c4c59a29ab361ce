"""Implicit Rusanov system ``A(v) = b`` and its admissibility-preserving
nonlinear Jacobi solver.

Row ``i`` of the system is ``D v_i - sum_d (L_d(v_{i-e_d}) + R_d(v_{i+e_d}))``
with, per direction ``d`` and ``lam = c dt / h``::

    L_d(v) = lam/2 * (E + F_d / c,  F + c P[:, d])
    R_d(v) = lam/2 * (E - F_d / c,  F - c P[:, d])
    D      = 1 + ndim * lam

Both ``L_d`` and ``R_d`` map admissible states to admissible states and ``D``
is a positive scalar, so every Jacobi sweep stays admissible.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from .m1_core import (ADMISSIBLE_TOL, AdmissibilityError, _pressure, all_admissible,
                      as_stacked)
from .mesh import Field, fill_ghosts, shifted

RESIDUAL_FLOOR = 1e-300


@dataclass(frozen=True)
class ImplicitOperator:
    """``A`` for one time step on one grid level.

    With ``tau > 0`` the operator is ``I + tau A`` instead, which keeps the
    same neighbour structure with off-diagonal blocks scaled by ``tau`` and
    diagonal ``1 + tau D``.
    """

    dt: float
    h: float
    dim: int
    c: float
    tau: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")

    @classmethod
    def for_grid(cls, dt, grid, c, tau=0.0):
        return cls(dt, grid.h, grid.dim, c, tau)

    @property
    def lam(self):
        return self.c * self.dt / self.h

    @property
    def plain_diagonal(self):
        return 1.0 + self.dim * self.lam

    @property
    def diagonal(self):
        if self.tau > 0:
            return 1.0 + self.tau * self.plain_diagonal
        return self.plain_diagonal

    @property
    def off_scale(self):
        return self.tau if self.tau > 0 else 1.0

    def augmented(self, tau):
        return ImplicitOperator(self.dt, self.h, self.dim, self.c, tau)


def _directional(s, op, axis, sign):
    U = as_stacked(s)
    P = _pressure(U, op.c)
    half = 0.5 * op.lam * op.off_scale
    out = np.empty_like(U)
    out[0] = U[0] + sign * U[1 + axis] / op.c
    out[1:] = U[1:] + sign * op.c * P[:, axis]
    return half * out


def op_L(s, op, axis=0):
    """Contribution of the lower neighbour along ``axis``."""
    return _directional(s, op, axis, +1.0)


def op_R(s, op, axis=0):
    """Contribution of the upper neighbour along ``axis``."""
    return _directional(s, op, axis, -1.0)


def op_D_inverse(s, op):
    return as_stacked(s) / op.diagonal


def neighbor_sum(U, op):
    """``sum_d L_d(v_{i-e_d}) + R_d(v_{i+e_d})`` on the interior of padded ``U``."""
    d = op.dim
    c = op.c
    P = _pressure(U, c)
    S = np.zeros((U.shape[0],) + tuple(n - 2 for n in U.shape[1:]))
    E = U[0]
    F = U[1:]
    for a in range(d):
        lo = shifted(d, a, -1)[1:]
        hi = shifted(d, a, +1)[1:]
        S[0] += E[lo] + E[hi] + (F[a][lo] - F[a][hi]) / c
        for b in range(d):
            S[1 + b] += F[b][lo] + F[b][hi] + c * (P[b, a][lo] - P[b, a][hi])
    S *= 0.5 * op.lam * op.off_scale
    return S


def apply_A(v, op, fill=True):
    """Return ``A(v)`` (or ``v + tau A(v)``) as a new Field.

    Ghosts of the result hold the transfer-BC extension so it can be
    restricted directly.
    """
    if fill:
        fill_ghosts(v)
    out = v.like(op.diagonal * v.interior - neighbor_sum(v.U, op))
    return fill_ghosts(out, v.bc.for_transfer())


def residual(b, v, op):
    """``b - A(v)`` as a Field with transfer-BC ghosts."""
    Av = apply_A(v, op)
    r = v.like(b.interior - Av.interior)
    return fill_ghosts(r, v.bc.for_transfer())


def residual_norm(r, c):
    """L2 norm over cells of ``(r_E, r_F / c)``; accepts a Field or interior array."""
    R = r.interior if isinstance(r, Field) else np.asarray(r)
    return float(np.sqrt(np.sum(R[0] ** 2) + np.sum(R[1:] ** 2) / c**2))


def _sweep_interior(v, b_int, op):
    fill_ghosts(v)
    return (b_int + neighbor_sum(v.U, op)) / op.diagonal


def _check(U_int, c, what):
    if not all_admissible(U_int, c, ADMISSIBLE_TOL):
        raise AdmissibilityError(f"{what} produced a non-admissible state")


def jacobi_sweep(v, b, op, out=None):
    """One nonlinear Jacobi sweep; reads ``v`` (ghosts refreshed), writes a new Field."""
    new = _sweep_interior(v, b.interior, op)
    _check(new, op.c, "Jacobi sweep")
    if out is None:
        out = v.like()
    out.interior = new
    return fill_ghosts(out)


@dataclass
class JacobiResult:
    v: Field
    iterations: int
    history: list = dc_field(default_factory=list)  # relative residual per iterate
    converged: bool = False
    residual: float = 0.0  # absolute norm of the returned iterate


def jacobi_solve(b, v0, op, eps, max_iter, monitor=None):
    """Nonlinear Jacobi until ``|b - A(v)| <= eps |b - A(v0)|``.

    The residual of iterate ``k`` falls out of sweep ``k+1`` as
    ``D (v_{k+1} - v_k)``, so no separate operator application is needed;
    the returned ``v`` is the first iterate meeting the tolerance.  Hitting
    ``max_iter`` is reported through ``converged``, not raised.
    """
    v = v0.copy()
    fill_ghosts(v)
    _check(v.interior, op.c, "initial guess")
    nxt = v.like()
    history = []
    norm0 = None
    k = 0
    while True:
        jacobi_sweep(v, b, op, out=nxt)
        rk = residual_norm(op.diagonal * (nxt.interior - v.interior), op.c)
        if norm0 is None:
            norm0 = max(rk, RESIDUAL_FLOOR)
        rel = rk / norm0
        history.append(rel)
        if rel <= eps or rk == 0.0:
            return JacobiResult(v, k, history, True, rk)
        if k >= max_iter:
            return JacobiResult(v, k, history, False, rk)
        v, nxt = nxt, v
        k += 1
        if monitor is not None:
            monitor("jacobi", v)
