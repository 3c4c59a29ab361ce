"""Time-explicit first-order Rusanov (HLL with wave speeds bounded by c)
reference solver."""

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .m1_core import CGS, AdmissibilityError, _pressure, all_admissible, as_stacked
from .mesh import GHOST, fill_ghosts, interior_slices

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeStep:
    dt: float
    cfl: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt}")

    @classmethod
    def from_cfl(cls, cfl, h, c):
        return cls(cfl * h / c, cfl)


def physical_flux(s, axis, k=CGS):
    """Flux function along ``axis``: ``(F_axis, c^2 P[:, axis])`` stacked like a state."""
    U = as_stacked(s)
    P = _pressure(U, k.c, checked=True)
    return np.concatenate([U[1 + axis][None], k.c**2 * P[:, axis]])


def _flux_all(U, axis, c):
    """Physical flux along ``axis`` for every cell of a stacked array."""
    P = _pressure(U, c)
    return np.concatenate([U[1 + axis][None], c**2 * P[:, axis]])


def rusanov_interface_flux(left, right, axis, k=CGS):
    UL = as_stacked(left)
    UR = as_stacked(right)
    G = 0.5 * (_flux_all(UL, axis, k.c) + _flux_all(UR, axis, k.c))
    return G - 0.5 * k.c * (UR - UL)


def flux_divergence(field, k=CGS):
    """Sum over axes of interface flux differences divided by h, on the interior.

    ``field`` ghosts must be filled.
    """
    U = field.U
    d = field.grid.dim
    c = k.c
    out = np.zeros_like(field.interior)
    for a in range(d):
        G = _flux_all(U, a, c)
        # interfaces k+1/2 between padded cells k and k+1, restricted to
        # interior cells on the other axes
        lo = [slice(None)] + [slice(GHOST, -GHOST)] * d
        hi = list(lo)
        lo[1 + a] = slice(0, -1)
        hi[1 + a] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        Phi = 0.5 * (G[lo] + G[hi]) - 0.5 * c * (U[hi] - U[lo])
        n = field.grid.shape[a]
        right = [slice(None)] * (d + 1)
        left = [slice(None)] * (d + 1)
        right[1 + a] = slice(1, n + 1)
        left[1 + a] = slice(0, n)
        out += Phi[tuple(right)] - Phi[tuple(left)]
    return out / field.grid.h


def explicit_step(field, step, k=CGS):
    """Advance ``field`` by one forward-Euler Rusanov step; returns a new Field."""
    d = field.grid.dim
    if step.cfl > 1.0 / d:
        warnings.warn(
            f"explicit CFL {step.cfl} exceeds {1.0 / d:g} in {d}D; positivity not guaranteed",
            RuntimeWarning,
            stacklevel=2,
        )
    fill_ghosts(field)
    new = field.copy()
    new.U[interior_slices(d)] -= step.dt * flux_divergence(field, k)
    if not all_admissible(new.interior, k.c):
        raise AdmissibilityError(
            f"explicit step left the admissible set (CFL {step.cfl}); reduce the time step"
        )
    return fill_ghosts(new)


def explicit_run(field, step, k=CGS, t_final=None, n_steps=None, steady_tol=None,
                 max_steps=1_000_000, callback=None):
    """Repeat :func:`explicit_step`.

    Stops after ``n_steps``, at ``t_final`` (the last step is shortened to
    land exactly), or once the relative L1 change of E in one step drops
    below ``steady_tol``.  ``callback(step_index, field)`` runs after each
    step.  Returns ``(field, steps_taken)``.
    """
    t = 0.0
    taken = 0
    while taken < max_steps:
        if n_steps is not None and taken >= n_steps:
            break
        dt = step.dt
        if t_final is not None:
            remaining = t_final - t
            if remaining <= 1e-12 * t_final:
                break
            dt = min(dt, remaining)
        new = explicit_step(field, TimeStep(dt, step.cfl), k)
        t += dt
        taken += 1
        if callback is not None:
            callback(taken, new)
        if steady_tol is not None:
            change = np.abs(new.interior[0] - field.interior[0]).sum() / np.abs(field.interior[0]).sum()
            if change < steady_tol:
                field = new
                break
        field = new
    return field, taken
