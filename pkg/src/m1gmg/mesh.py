"""Cell-centred Cartesian grids with one ghost layer, boundary conditions,
and the nested multigrid hierarchy."""

from dataclasses import dataclass

import numpy as np

GHOST = 1

PERIODIC = "periodic"
ZERO_GRADIENT = "zero-gradient"


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class Inflow:
    """Dirichlet inflow on a strip of one side.

    Ghost cells whose boundary face centre has tangential coordinate in
    ``[lo, hi]`` receive ``state`` (stacked ``E, F...``); the rest of the
    side behaves as zero-gradient.  In 1D the strip bounds are ignored.
    """

    lo: float
    hi: float
    state: tuple


@dataclass(frozen=True)
class BoundaryCondition:
    # one (low, high) pair per axis; each entry is PERIODIC, ZERO_GRADIENT or an Inflow
    sides: tuple

    def __post_init__(self):
        for axis, (lo, hi) in enumerate(self.sides):
            for kind in (lo, hi):
                if not (kind in (PERIODIC, ZERO_GRADIENT) or isinstance(kind, Inflow)):
                    raise ConfigurationError(f"unknown boundary kind {kind!r} on axis {axis}")
            if (lo == PERIODIC) != (hi == PERIODIC):
                raise ConfigurationError(f"axis {axis}: periodic must be set on both sides")

    @classmethod
    def uniform(cls, kind, dim=2):
        return cls(tuple((kind, kind) for _ in range(dim)))

    @property
    def dim(self):
        return len(self.sides)

    @property
    def periodic(self):
        return all(lo == PERIODIC for lo, _ in self.sides)

    def for_transfer(self):
        """Same BC with inflow strips replaced by zero-gradient.

        Used when filling ghosts of residuals and of fields about to be
        restricted or prolonged, where a prescribed inflow value is not a
        sample of the field being transferred.
        """
        sides = tuple(
            tuple(ZERO_GRADIENT if isinstance(k, Inflow) else k for k in pair)
            for pair in self.sides
        )
        return BoundaryCondition(sides)


@dataclass(frozen=True)
class GridLevel:
    shape: tuple  # interior cell counts, x first
    h: float
    origin: tuple  # lower corner of the domain
    level: int = 0

    @property
    def dim(self):
        return len(self.shape)

    @property
    def nx(self):
        return self.shape[0]

    @property
    def ny(self):
        return self.shape[1] if self.dim > 1 else 1

    @property
    def ncells(self):
        return int(np.prod(self.shape))

    @property
    def padded_shape(self):
        return tuple(n + 2 * GHOST for n in self.shape)

    def centers(self, axis):
        return self.origin[axis] + (np.arange(self.shape[axis]) + 0.5) * self.h

    def mesh(self):
        """Cell-centre coordinate arrays, indexed ``[i, j]``."""
        return np.meshgrid(*(self.centers(a) for a in range(self.dim)), indexing="ij")

    def coarsen(self):
        for a, n in enumerate(self.shape):
            if n % 2 or n < 4:
                raise ConfigurationError(
                    f"level {self.level + 1}: axis {a} has {n} cells at level "
                    f"{self.level}, cannot halve to at least 2"
                )
        return GridLevel(tuple(n // 2 for n in self.shape), 2 * self.h, self.origin, self.level + 1)


def interior_slices(dim):
    return (slice(None),) + (slice(GHOST, -GHOST),) * dim


def shifted(dim, axis, offset):
    """Index into a padded array selecting the interior moved by ``offset``
    cells along ``axis``."""
    idx = [slice(None)]
    for a in range(dim):
        if a == axis:
            idx.append(slice(GHOST + offset, -GHOST + offset or None))
        else:
            idx.append(slice(GHOST, -GHOST))
    return tuple(idx)


@dataclass
class Field:
    U: np.ndarray  # (1 + d, *padded_shape)
    grid: GridLevel
    bc: BoundaryCondition

    @classmethod
    def zeros(cls, grid, bc):
        return cls(np.zeros((1 + grid.dim,) + grid.padded_shape), grid, bc)

    @classmethod
    def from_interior(cls, interior, grid, bc):
        f = cls.zeros(grid, bc)
        f.interior[...] = interior
        return fill_ghosts(f)

    @property
    def interior(self):
        return self.U[interior_slices(self.grid.dim)]

    @interior.setter
    def interior(self, value):
        self.U[interior_slices(self.grid.dim)] = value

    def copy(self):
        return Field(self.U.copy(), self.grid, self.bc)

    def like(self, interior=None):
        f = Field(np.zeros_like(self.U), self.grid, self.bc)
        if interior is not None:
            f.interior = interior
        return f

    @property
    def nbytes(self):
        return self.U.nbytes


def _face(U, axis, index):
    idx = [slice(None)] * U.ndim
    idx[axis + 1] = index
    return tuple(idx)


def fill_ghosts(field, bc=None):
    """Populate the ghost layer of ``field`` in place from its BC (or ``bc``).

    Axes are filled in order, each over the full padded extent of the axes
    already done, so corner ghosts end up consistent for 9-point stencils.
    """
    bc = field.bc if bc is None else bc
    U = field.U
    grid = field.grid
    for axis, (lo, hi) in enumerate(bc.sides):
        n = grid.shape[axis]
        if lo == PERIODIC:
            U[_face(U, axis, 0)] = U[_face(U, axis, n)]
            U[_face(U, axis, n + 1)] = U[_face(U, axis, 1)]
            continue
        U[_face(U, axis, 0)] = U[_face(U, axis, 1)]
        U[_face(U, axis, n + 1)] = U[_face(U, axis, n)]
        for kind, ghost in ((lo, 0), (hi, n + 1)):
            if isinstance(kind, Inflow):
                _write_inflow(U, grid, axis, ghost, kind)
    return field


def _write_inflow(U, grid, axis, ghost, inflow):
    state = np.asarray(inflow.state, dtype=float)
    face = U[_face(U, axis, ghost)]  # view, shape (1+d, *other padded axes)
    if grid.dim == 1:
        face[...] = state
        return
    # tangential axis is the other one (2D only)
    t_axis = 1 - axis
    yc = grid.centers(t_axis)
    eps = 1e-9 * grid.h
    in_strip = np.flatnonzero((yc >= inflow.lo - eps) & (yc <= inflow.hi + eps)) + GHOST
    face[:, in_strip] = state[:, None]


@dataclass
class LevelWorkspace:
    """Work vectors kept at one level: rhs ``b``, restricted guess ``v``,
    smoothed iterate ``u``, explicit pseudo-time stage ``v_tilde``, coarse
    correction ``e``, and the auxiliaries ``A(v)``, restricted fine
    operator and their difference."""

    grid: GridLevel
    b: Field
    v: Field
    u: Field
    v_tilde: Field
    e: Field
    A_v: Field
    R_Afine: Field
    diff: Field

    @classmethod
    def allocate(cls, grid, bc):
        names = ("b", "v", "u", "v_tilde", "e", "A_v", "R_Afine", "diff")
        return cls(grid, **{n: Field.zeros(grid, bc) for n in names})

    @property
    def nbytes(self):
        return sum(getattr(self, n).nbytes for n in
                   ("b", "v", "u", "v_tilde", "e", "A_v", "R_Afine", "diff"))


def build_hierarchy(shape, h, l_max, bc, origin=None):
    """Return ``(levels, workspaces)`` for ``l_max`` nested levels, finest first."""
    shape = tuple(int(n) for n in shape)
    if l_max < 1:
        raise ConfigurationError(f"l_max must be >= 1, got {l_max}")
    if any(n < 2 for n in shape):
        raise ConfigurationError(f"need at least 2 cells per axis, got {shape}")
    if origin is None:
        origin = (0.0,) * len(shape)
    levels = [GridLevel(shape, float(h), tuple(origin), 0)]
    for _ in range(l_max - 1):
        levels.append(levels[-1].coarsen())
    return levels, [LevelWorkspace.allocate(g, bc) for g in levels]
