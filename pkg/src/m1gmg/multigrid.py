"""Nonlinear geometric multigrid (FAS) for the implicit M1 system.

Coarse levels do not solve ``A(u) = A(v) + r`` directly, because that right
hand side is generally not an admissible state.  They instead march the
pseudo-time problem ``du/dtau + A(u) = A(v) + r`` with a split step: a
per-cell explicit stage sub-cycled so every cell stays admissible, followed
by an implicit stage ``u + dtau A(u) = u_tilde`` relaxed with Jacobi.  Coarse
corrections that would leave the admissible set are pulled back towards the
uncorrected value cell by cell.
"""

import logging
import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from .m1_core import ADMISSIBLE_TOL, AdmissibilityError, all_admissible, is_admissible, PhysicalConstants
from .jacobi import (RESIDUAL_FLOOR, ImplicitOperator, apply_A, jacobi_sweep, residual,
                     residual_norm)
from .mesh import GHOST, Field, build_hierarchy, fill_ghosts

log = logging.getLogger(__name__)


# -- transfer operators -------------------------------------------------------

def _padded_transfer_copy(field):
    tmp = Field(field.U.copy(), field.grid, field.bc)
    return fill_ghosts(tmp, field.bc.for_transfer()).U


def restrict(fine, coarse_grid=None):
    """Full weighting: ``1/4, 1/2, 1/4`` per axis around fine cell ``2i``."""
    X = _padded_transfer_copy(fine)
    d = fine.grid.dim
    for a in range(d):
        nc = fine.grid.shape[a] // 2
        ax = 1 + a
        lo = np.take(X, np.arange(0, 2 * nc, 2), axis=ax)
        mid = np.take(X, np.arange(1, 2 * nc + 1, 2), axis=ax)
        hi = np.take(X, np.arange(2, 2 * nc + 2, 2), axis=ax)
        X = 0.25 * lo + 0.5 * mid + 0.25 * hi
        # re-pad along the reduced axis so later axes index uniformly
        pad = [(0, 0)] * X.ndim
        pad[ax] = (GHOST, GHOST)
        X = np.pad(X, pad)
    grid = coarse_grid if coarse_grid is not None else fine.grid.coarsen()
    out = Field(X, grid, fine.bc)
    return fill_ghosts(out, fine.bc.for_transfer())


def prolong(coarse, fine_grid):
    """Linear interpolation: fine ``2i`` copies coarse ``i``, fine ``2i+1``
    averages coarse ``i`` and ``i+1``; tensor product across axes."""
    X = _padded_transfer_copy(coarse)
    d = coarse.grid.dim
    for a in range(d):
        nc = coarse.grid.shape[a]
        ax = 1 + a
        here = np.take(X, np.arange(GHOST, nc + GHOST), axis=ax)
        nxt = np.take(X, np.arange(GHOST + 1, nc + GHOST + 1), axis=ax)
        shape = list(here.shape)
        shape[ax] = 2 * nc
        Y = np.empty(shape)
        even = [slice(None)] * Y.ndim
        odd = [slice(None)] * Y.ndim
        even[ax] = slice(0, None, 2)
        odd[ax] = slice(1, None, 2)
        Y[tuple(even)] = here
        Y[tuple(odd)] = 0.5 * (here + nxt)
        pad = [(0, 0)] * Y.ndim
        pad[ax] = (GHOST, GHOST)
        X = np.pad(Y, pad)
    out = Field(X, fine_grid, coarse.bc)
    return fill_ghosts(out, coarse.bc.for_transfer())


# -- pseudo-time machinery ----------------------------------------------------

@dataclass
class PseudoTimeParams:
    dtau_im: float = 1e-3
    m: int = 3
    safety: float = 0.9
    eps_i: float = 1e-3
    eps_d: float = 1e-6
    grow: float = 1.1
    shrink: float = 0.5
    underflow: float = 1e-14

    def __post_init__(self):
        if not self.dtau_im > 0:
            raise ValueError("dtau_im must be positive")
        if not 0 < self.safety < 1:
            raise ValueError("safety must lie in (0, 1)")
        if not self.eps_d < self.eps_i:
            raise ValueError("eps_d must be smaller than eps_i")
        if self.m < 1:
            raise ValueError("m must be >= 1")


def max_admissible_step(U, G, c):
    """Largest ``t >= 0`` with ``U + s G`` admissible for all ``s`` in ``[0, t]``.

    Vectorised over trailing axes; ``inf`` where the ray never leaves the
    admissible cone.  Works in units where flux is divided by ``c``.
    """
    U = np.asarray(U, dtype=float)
    G = np.asarray(G, dtype=float)
    E, gE = U[0], G[0]
    phi, gam = U[1:] / c, G[1:] / c
    with np.errstate(divide="ignore", invalid="ignore"):
        t_pos = np.where(gE < 0, -E / gE, np.inf)
        # q(t) = a t^2 + b t + q0 = |phi + t gam|^2 - (E + t gE)^2
        a = np.sum(gam * gam, axis=0) - gE * gE
        b = 2.0 * (np.sum(phi * gam, axis=0) - E * gE)
        q0 = np.sum(phi * phi, axis=0) - E * E
        disc = b * b - 4.0 * a * q0
        sq = np.sqrt(np.maximum(disc, 0.0))
        # numerically stable pair of roots
        qq = -0.5 * (b + np.where(b >= 0, sq, -sq))
        r1 = np.where(a != 0, qq / a, np.inf)
        r2 = np.where(qq != 0, q0 / qq, np.inf)
        lin = np.where(b > 0, -q0 / b, np.inf)
    roots = np.stack([np.where(np.isfinite(r1), r1, np.inf), np.where(np.isfinite(r2), r2, np.inf)])
    roots = np.where(roots > 0, roots, np.inf)
    first = roots.min(axis=0)
    # a < 0 with no real crossing: q stays <= 0 along the ray
    first = np.where((a < 0) & (disc <= 0), np.inf, first)
    first = np.where(a == 0, lin, first)
    # already on the boundary (rounding may put q0 a hair above zero)
    on_edge = q0 >= 0
    leaving = (b > 0) | ((b == 0) & (a > 0))
    first = np.where(on_edge & leaving, 0.0, first)
    first = np.where(on_edge & ~leaving & (a > 0), np.where(a != 0, -b / np.where(a != 0, a, 1), np.inf), first)
    first = np.where(on_edge & ~leaving & (a <= 0), np.inf, first)
    return np.minimum(t_pos, first)


def max_admissible_dtau(s, incr, remaining, k=None, safety=0.9):
    """Explicit pseudo-step for one cell (or many).

    Returns ``remaining`` when the whole remaining interval keeps the state
    admissible, otherwise ``safety`` times the distance to the admissible
    boundary along ``incr``.  Zero means the state sits on the boundary and
    ``incr`` points out of it.
    """
    c = (k or PhysicalConstants()).c
    t_star = max_admissible_step(s, incr, c)
    return np.where(t_star > remaining, remaining, safety * t_star)


def explicit_subcycle(U, G, dtau, c, safety=0.9, underflow=1e-14):
    """Advance each cell of ``U`` along the fixed increment ``G`` for pseudo
    time ``dtau`` in admissible sub-steps.

    Cells whose step falls below ``underflow * dtau`` stop where they are.
    Returns ``(U_tilde, substeps, aborted)`` where ``substeps`` is per cell.
    """
    shape = U.shape[1:]
    Ut = U.reshape(U.shape[0], -1).copy()
    Gf = G.reshape(G.shape[0], -1)
    n = Ut.shape[1]
    t = np.zeros(n)
    steps = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    aborted = 0
    floor = underflow * dtau
    while active.size:
        rem = dtau - t[active]
        t_star = max_admissible_step(Ut[:, active], Gf[:, active], c)
        full = t_star > rem
        step = np.where(full, rem, safety * t_star)
        moved = Ut[:, active] + step * Gf[:, active]
        # a step that rounds away leaves t_star unchanged forever; treat it as underflow
        stalled = np.all(moved == Ut[:, active], axis=0) & (step < rem)
        tiny = ~full & ((step < floor) | stalled)
        go = ~tiny
        idx = active[go]
        Ut[:, idx] = moved[:, go]
        t[idx] += step[go]
        steps[idx] += 1
        aborted += int(tiny.sum())
        active = active[go & ~full]
    return Ut.reshape((U.shape[0],) + shape), steps.reshape(shape), aborted


@dataclass
class SmootherStats:
    sweeps: dict = dc_field(default_factory=dict)  # level -> Jacobi sweeps
    substeps: int = 0
    aborted: int = 0
    corrected_cells: int = 0
    fallback_cells: int = 0

    def add_sweeps(self, level, n):
        self.sweeps[level] = self.sweeps.get(level, 0) + n


def pseudo_time_smooth(rhs, v0, op, params, n_jacobi, stats=None, level=0, monitor=None):
    """``params.m`` split pseudo-time steps towards ``A(u) = rhs``.

    ``rhs`` may be non-admissible; ``v0`` must be admissible and so is every
    returned iterate.
    """
    stats = stats if stats is not None else SmootherStats()
    c = op.c
    dtau = params.dtau_im
    aug = op.augmented(dtau)
    u = v0.copy()
    fill_ghosts(u)
    ut = u.like()
    w = u.like()
    g = rhs.interior
    for _ in range(params.m):
        ut_int, steps, aborted = explicit_subcycle(
            u.interior, g, dtau, c, params.safety, params.underflow)
        stats.substeps += int(steps.sum())
        stats.aborted += aborted
        if not all_admissible(ut_int, c, ADMISSIBLE_TOL):
            raise AdmissibilityError("explicit pseudo-time stage left the admissible set")
        ut.interior = ut_int
        fill_ghosts(ut)
        if monitor is not None:
            monitor("explicit_stage", ut)
        # implicit stage, started from the previous pseudo-time iterate
        for _ in range(n_jacobi):
            jacobi_sweep(u, ut, aug, out=w)
            u, w = w, u
        stats.add_sweeps(level, n_jacobi)
        if monitor is not None:
            monitor("pseudo_time", u)
    return u


def admissible_prolong_correction(v, correction, c, tau0=1.0, tau_min=1e-12, stats=None):
    """``v + correction`` where admissible; elsewhere the implicit pseudo-time
    blend ``(v + t (v + correction)) / (1 + t)`` with ``t`` halved from
    ``tau0`` until admissible, or ``v`` itself once ``t < tau_min``."""
    V = v.interior
    corr = correction.interior if isinstance(correction, Field) else correction
    target = V + corr
    k = PhysicalConstants(c=c)
    ok = is_admissible(target, k, 0.0)
    out = target.copy()
    bad = np.argwhere(~np.atleast_1d(ok))
    if bad.size:
        sel = (slice(None),) + tuple(bad.T)
        vb = V[sel]
        tb = target[sel]
        tau = np.full(vb.shape[1], float(tau0))
        res = vb.copy()
        pending = np.ones(vb.shape[1], dtype=bool)
        while pending.any():
            p = np.flatnonzero(pending)
            cand = (vb[:, p] + tau[p] * tb[:, p]) / (1.0 + tau[p])
            good = is_admissible(cand, k, 0.0)
            res[:, p[good]] = cand[:, good]
            pending[p[good]] = False
            tau[p[~good]] *= 0.5
            give_up = pending & (tau < tau_min)
            res[:, give_up] = vb[:, give_up]
            pending &= ~give_up
            if stats is not None:
                stats.fallback_cells += int(give_up.sum())
        out[sel] = res
        if stats is not None:
            stats.corrected_cells += bad.shape[0]
    result = v.like(out)
    fill_ghosts(result)
    if not all_admissible(result.interior, c, ADMISSIBLE_TOL):
        raise AdmissibilityError("prolongation correction produced a non-admissible state")
    return result


# -- V-cycle and driver -------------------------------------------------------

@dataclass
class MGParams:
    l_max: int = 1
    nu0: int = 3
    nul: int = 1
    nu_coarse: int = 1
    eps_outer: float = 1e-2
    max_cycles: int = 10_000
    pseudo: PseudoTimeParams = dc_field(default_factory=PseudoTimeParams)


@dataclass
class CycleReport:
    residuals: list = dc_field(default_factory=lambda: [1.0])  # normalised, entry 0 is the start
    dtau_im: list = dc_field(default_factory=list)  # value used during each cycle
    wall_ms: list = dc_field(default_factory=list)
    stats: SmootherStats = dc_field(default_factory=SmootherStats)
    cycles: int = 0
    converged: bool = False
    initial_residual: float = 0.0
    workspace_bytes: int = 0

    def rows(self):
        """``(cycle, residual, dtau_im, wall_ms)`` tuples, cycle 0 first."""
        out = [(0, self.residuals[0], float("nan"), 0.0)]
        for i in range(self.cycles):
            out.append((i + 1, self.residuals[i + 1], self.dtau_im[i], self.wall_ms[i]))
        return out


class FASSolver:
    """One implicit time step solved by FAS V-cycles on a nested hierarchy."""

    def __init__(self, fine_grid, bc, dt, c, params=None, monitor=None):
        self.params = params or MGParams()
        self.c = c
        self.levels, self.ws = build_hierarchy(
            fine_grid.shape, fine_grid.h, self.params.l_max, bc, fine_grid.origin)
        self.ops = [ImplicitOperator.for_grid(dt, g, c) for g in self.levels]
        self.bc = bc
        self.monitor = monitor
        self.stats = SmootherStats()

    @property
    def workspace_bytes(self):
        return sum(w.nbytes for w in self.ws)

    def _jacobi(self, v, b, op, n, level):
        out = v.like()
        for _ in range(n):
            jacobi_sweep(v, b, op, out=out)
            v, out = out, v
            if self.monitor is not None:
                self.monitor("jacobi", v)
        self.stats.add_sweeps(level, n)
        return v

    def _pseudo(self, rhs, v, level, n):
        return pseudo_time_smooth(rhs, v, self.ops[level], self.params.pseudo, n,
                                  self.stats, level, self.monitor)

    def vcycle(self, v, b):
        """One V-cycle from fine iterate ``v`` for right-hand side ``b``."""
        p = self.params
        L = p.l_max
        ws = self.ws
        ws[0].b.U[...] = b.U
        u = self._jacobi(v.copy(), ws[0].b, self.ops[0], p.nu0, 0)
        if L == 1:
            return u
        ws[0].u.U[...] = u.U
        rbar = residual(ws[0].b, u, self.ops[0])
        # descent
        for l in range(1, L):
            w = ws[l]
            w.v.U[...] = restrict(ws[l - 1].u, self.levels[l]).U
            fill_ghosts(w.v)
            if self.monitor is not None:
                self.monitor("restrict", w.v)
            r = restrict(rbar, self.levels[l])
            w.A_v.U[...] = apply_A(w.v, self.ops[l]).U
            w.b.interior = w.A_v.interior + r.interior
            fill_ghosts(w.b, self.bc.for_transfer())
            n = p.nul if l < L - 1 else p.nu_coarse
            u_l = self._pseudo(w.b, w.v, l, n)
            w.u.U[...] = u_l.U
            if l < L - 1:
                rbar = residual(w.b, w.u, self.ops[l])
        # ascent
        for l in range(L - 2, -1, -1):
            coarse, w = ws[l + 1], ws[l]
            diff = coarse.u.like(coarse.u.interior - coarse.v.interior)
            coarse.e.U[...] = diff.U
            e = prolong(diff, self.levels[l])
            corrected = admissible_prolong_correction(w.u, e, self.c, stats=self.stats)
            if self.monitor is not None:
                self.monitor("correction", corrected)
            if l == 0:
                u = self._jacobi(corrected, w.b, self.ops[0], p.nu0, 0)
                w.u.U[...] = u.U
            else:
                w.u.U[...] = self._pseudo(w.b, corrected, l, p.nul).U
        return ws[0].u.copy()


def fas_vcycle(solver, v, b):
    return solver.vcycle(v, b)


def outer_drive(b, v0, dt, c, params=None, monitor=None, solver=None):
    """Repeat V-cycles until ``|r_k| <= eps_outer |r_0|``, adapting ``dtau_im``.

    Returns ``(v, CycleReport)``; running out of cycles sets
    ``report.converged = False``.
    """
    params = params or MGParams()
    # the driver adapts dtau_im; keep the caller's params untouched
    params = MGParams(params.l_max, params.nu0, params.nul, params.nu_coarse,
                      params.eps_outer, params.max_cycles,
                      PseudoTimeParams(**vars(params.pseudo)))
    solver = solver or FASSolver(b.grid, b.bc, dt, c, params, monitor)
    solver.params = params
    op0 = solver.ops[0]
    report = CycleReport(stats=solver.stats, workspace_bytes=solver.workspace_bytes)
    v = v0.copy()
    fill_ghosts(v)
    r0 = residual_norm(residual(b, v, op0), c)
    report.initial_residual = r0
    if r0 == 0.0:
        report.converged = True
        return v, report
    norm0 = max(r0, RESIDUAL_FLOOR)
    prev = r0
    pt = params.pseudo
    while report.cycles < params.max_cycles:
        t0 = time.perf_counter()
        report.dtau_im.append(pt.dtau_im)
        v = solver.vcycle(v, b)
        rk = residual_norm(residual(b, v, op0), c)
        report.wall_ms.append(1e3 * (time.perf_counter() - t0))
        report.cycles += 1
        report.residuals.append(rk / norm0)
        change = abs(rk - prev) / norm0
        if change > pt.eps_i:
            pt.dtau_im *= pt.grow
        if change < pt.eps_d:
            pt.dtau_im *= pt.shrink
        prev = rk
        if rk / norm0 <= params.eps_outer:
            report.converged = True
            break
    return v, report
