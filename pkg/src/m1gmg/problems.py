"""Test configurations (beam, four-quadrant Riemann problem), their
diagnostics, and a small driver that marches any of the three solvers."""

import math
import time
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .explicit import TimeStep, explicit_step
from .jacobi import ImplicitOperator, jacobi_solve
from .m1_core import CGS, PhysicalConstants
from .mesh import PERIODIC, ZERO_GRADIENT, BoundaryCondition, Field, GridLevel, Inflow
from .multigrid import FASSolver, MGParams, outer_drive

BEAM_STRIP = (-0.875, -0.75)
RIEMANN_T_FINAL = 1e-11
RIEMANN_F_FACTOR = 1.0 - 1e-8
SOLVERS = ("explicit", "jacobi", "gmg")


@dataclass
class ProblemSpec:
    name: str
    grid: GridLevel
    bc: BoundaryCondition
    initial: Callable  # (X, Y) -> stacked interior array
    t_final: Optional[float] = None  # None: a single implicit step towards steady state
    reference_energy: float = 1.0  # normalisation for cuts
    constants: PhysicalConstants = CGS

    def initial_field(self):
        X, Y = self.grid.mesh()
        U = self.initial(X, Y)
        return Field.from_interior(U, self.grid, self.bc)


def beam_spec(resolution, k=CGS):
    """Beam entering ``[-1, 1]^2`` at 45 degrees through a strip of the left side."""
    n = int(resolution)
    h = 2.0 / n
    grid = GridLevel((n, n), h, (-1.0, -1.0))
    E0 = k.a_r * 300.0**4
    Eb = k.a_r * 1000.0**4
    s = math.sqrt(2.0) / 2.0
    inflow = Inflow(BEAM_STRIP[0], BEAM_STRIP[1], (Eb, k.c * Eb * s, k.c * Eb * s))
    bc = BoundaryCondition(((inflow, ZERO_GRADIENT), (ZERO_GRADIENT, ZERO_GRADIENT)))

    def initial(X, Y):
        U = np.zeros((3,) + X.shape)
        U[0] = E0
        return U

    return ProblemSpec("beam", grid, bc, initial, None, Eb, k)


def riemann_directions(X, Y):
    """Unit flux directions of the four quadrants of ``[0, 1]^2``."""
    left, bottom = X < 0.5, Y < 0.5
    dx = np.where(bottom & left, 1.0, np.where(~bottom & ~left, -1.0, 0.0))
    dy = np.where(bottom & ~left, -1.0, np.where(~bottom & left, 1.0, 0.0))
    return dx, dy


def riemann_spec(resolution, bc_kind=PERIODIC, k=CGS, t_final=RIEMANN_T_FINAL):
    if bc_kind not in (PERIODIC, ZERO_GRADIENT):
        raise ValueError(f"bc_kind must be {PERIODIC!r} or {ZERO_GRADIENT!r}, got {bc_kind!r}")
    n = int(resolution)
    grid = GridLevel((n, n), 1.0 / n, (0.0, 0.0))
    bc = BoundaryCondition.uniform(bc_kind, 2)
    E0 = k.a_r * 1000.0**4

    def initial(X, Y):
        dx, dy = riemann_directions(X, Y)
        U = np.empty((3,) + X.shape)
        U[0] = E0
        U[1] = RIEMANN_F_FACTOR * k.c * E0 * dx
        U[2] = RIEMANN_F_FACTOR * k.c * E0 * dy
        return U

    return ProblemSpec("riemann", grid, bc, initial, t_final, E0, k)


def conservation_error(field, reference_total):
    if not reference_total > 0:
        raise ValueError("reference_total must be positive")
    E = field.interior[0] if isinstance(field, Field) else np.asarray(field)
    return abs(float(E.sum()) - reference_total) / reference_total


def midline_cut(field, reference_energy=1.0):
    """``(x, E / reference_energy)`` along the horizontal mid-line."""
    E = field.interior[0]
    ny = E.shape[1]
    if ny % 2:
        row = E[:, ny // 2]
    else:
        row = 0.5 * (E[:, ny // 2 - 1] + E[:, ny // 2])
    return field.grid.centers(0), row / reference_energy


def time_plan(t_final, dt_max):
    """``n`` equal steps of ``t_final / n`` with ``n`` the fewest keeping ``dt <= dt_max``."""
    n = max(1, math.ceil(t_final / dt_max * (1 - 1e-12)))
    return n, t_final / n


# -- driver -------------------------------------------------------------------

@dataclass
class SolverSettings:
    solver: str = "jacobi"
    cfl: float = 0.9
    eps_jacobi: float = 1e-5
    max_iters: int = 100_000
    mg: MGParams = dc_field(default_factory=MGParams)
    max_steps: int = 1_000_000


@dataclass
class RunResult:
    field: Field
    steps: int = 0
    dt: float = 0.0
    residual_rows: list = dc_field(default_factory=list)  # (index, residual, dtau_im)
    conservation: list = dc_field(default_factory=list)  # (step, rel_error)
    iterations: int = 0  # Jacobi iterations or V-cycles, summed over steps
    cell_updates: int = 0
    converged: bool = True
    final_residual: float = 0.0
    wall_time: float = 0.0
    workspace_bytes: int = 0
    aborted_subcycles: int = 0


def _cell_updates(stats, levels):
    return sum(n * levels[l].ncells for l, n in stats.sweeps.items())


def run_problem(spec, settings, monitor=None):
    """March ``spec`` with the chosen solver and collect diagnostics.

    Steady problems take one implicit step at the requested CFL (the
    explicit solver instead runs to a steady state).  ``monitor(kind, field)``
    sees every iterate produced by the solvers.
    """
    if settings.solver not in SOLVERS:
        raise ValueError(f"unknown solver {settings.solver!r}")
    k = spec.constants
    grid = spec.grid
    u = spec.initial_field()
    total0 = float(u.interior[0].sum())
    dt_cfl = settings.cfl * grid.h / k.c
    if spec.t_final is None:
        n_steps, dt = 1, dt_cfl
    else:
        n_steps, dt = time_plan(spec.t_final, dt_cfl)
    if n_steps > settings.max_steps:
        raise ValueError(f"{n_steps} steps exceed max_steps={settings.max_steps}")
    res = RunResult(field=u, dt=dt)
    res.workspace_bytes = 2 * u.nbytes
    t0 = time.perf_counter()

    if settings.solver == "explicit":
        step = TimeStep(dt, settings.cfl)
        if spec.t_final is None:
            n_steps = settings.max_steps
        for s in range(1, n_steps + 1):
            new = explicit_step(u, step, k)
            if monitor is not None:
                monitor("explicit", new)
            change = float(np.abs(new.interior[0] - u.interior[0]).sum() / np.abs(u.interior[0]).sum())
            res.residual_rows.append((s, change, float("nan")))
            u = new
            res.steps = s
            res.cell_updates += grid.ncells
            if spec.bc.periodic:
                res.conservation.append((s, conservation_error(u, total0)))
            if spec.t_final is None and change < settings.eps_jacobi:
                break
        res.iterations = res.steps
        res.final_residual = res.residual_rows[-1][1] if res.residual_rows else 0.0
        if spec.t_final is None:
            res.converged = res.final_residual < settings.eps_jacobi
    else:
        op = ImplicitOperator.for_grid(dt, grid, k.c)
        solver = None
        if settings.solver == "gmg":
            solver = FASSolver(grid, spec.bc, dt, k.c, settings.mg, monitor)
            res.workspace_bytes = solver.workspace_bytes
        offset = 0
        for s in range(1, n_steps + 1):
            b = u
            if settings.solver == "jacobi":
                out = jacobi_solve(b, b, op, settings.eps_jacobi, settings.max_iters, monitor)
                u = out.v
                for i, r in enumerate(out.history):
                    res.residual_rows.append((offset + i, r, float("nan")))
                offset += len(out.history)
                res.iterations += out.iterations
                # the convergence test costs one extra sweep past the returned iterate
                res.cell_updates += (out.iterations + 1) * grid.ncells
                res.converged &= out.converged
                res.final_residual = out.history[-1]
            else:
                u, rep = outer_drive(b, b, dt, k.c, settings.mg, monitor, solver)
                for i, r, tau, _ in rep.rows():
                    res.residual_rows.append((offset + i, r, tau))
                offset += rep.cycles + 1
                res.iterations += rep.cycles
                res.converged &= rep.converged
                res.final_residual = rep.residuals[-1]
                res.aborted_subcycles = rep.stats.aborted
            res.steps = s
            if spec.bc.periodic:
                res.conservation.append((s, conservation_error(u, total0)))
        if solver is not None:
            res.cell_updates = _cell_updates(solver.stats, solver.levels)
    res.wall_time = time.perf_counter() - t0
    res.field = u
    return res
