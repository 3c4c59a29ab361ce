"""Implicit gray M1 radiative transfer on Cartesian grids: nonlinear Jacobi
and nonlinear geometric multigrid solvers that keep every state admissible."""

__version__ = "0.1.0"

from .m1_core import (CGS, AdmissibilityError, DomainError, PhysicalConstants, RadState,
                      eddington_chi, is_admissible, pressure_tensor, radiative_temperature,
                      reduced_flux)
from .mesh import BoundaryCondition, Field, GridLevel, Inflow, build_hierarchy, fill_ghosts
from .jacobi import ImplicitOperator, apply_A, jacobi_solve, jacobi_sweep
from .multigrid import MGParams, PseudoTimeParams, outer_drive, prolong, restrict

__all__ = [
    "CGS", "AdmissibilityError", "DomainError", "PhysicalConstants", "RadState",
    "eddington_chi", "is_admissible", "pressure_tensor", "radiative_temperature",
    "reduced_flux", "BoundaryCondition", "Field", "GridLevel", "Inflow",
    "build_hierarchy", "fill_ghosts", "ImplicitOperator", "apply_A", "jacobi_solve",
    "jacobi_sweep", "MGParams", "PseudoTimeParams", "outer_drive", "prolong", "restrict",
]
