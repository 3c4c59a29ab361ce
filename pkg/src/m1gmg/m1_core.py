"""Gray M1 closure and admissibility predicates.

Every function here works on a *stacked state* array ``U`` whose first axis
holds the conserved components ``(E, F_1, ..., F_d)``; any trailing axes are
treated as cells.  A single cell is just a 1D array of length ``1 + d``.
"""

from dataclasses import dataclass

import numpy as np

# below this reduced flux the flux direction is undefined and the isotropic
# tensor is returned
DIRECTION_EPS = 1e-14
# rounding slack allowed on f before eddington_chi refuses its input
CHI_CLAMP = 1e-12
ADMISSIBLE_TOL = 1e-12


class DomainError(ValueError):
    """A state or scalar lies outside the domain of a closure function."""


class AdmissibilityError(RuntimeError):
    """A solver produced a state outside the admissible set."""


@dataclass(frozen=True)
class PhysicalConstants:
    c: float = 2.99792458e10  # cm/s
    a_r: float = 7.5657e-15  # erg cm^-3 K^-4

    def __post_init__(self):
        if not (self.c > 0 and self.a_r > 0):
            raise ValueError(f"constants must be positive, got c={self.c}, a_r={self.a_r}")


CGS = PhysicalConstants()


@dataclass(frozen=True)
class RadState:
    """One cell's conserved pair: energy density and flux vector."""

    E: float
    F: tuple

    @property
    def dim(self):
        return len(self.F)

    def as_array(self):
        return np.array((self.E, *self.F), dtype=float)

    @classmethod
    def from_array(cls, u):
        u = np.asarray(u, dtype=float)
        return cls(float(u[0]), tuple(float(x) for x in u[1:]))


def as_stacked(s):
    if isinstance(s, RadState):
        return s.as_array()
    return np.asarray(s, dtype=float)


def flux_norm(U):
    U = as_stacked(U)
    return np.sqrt(np.sum(U[1:] ** 2, axis=0))


def reduced_flux(s, k=CGS):
    """Return ``|F| / (c E)``; raises :class:`DomainError` if any ``E <= 0``."""
    U = as_stacked(s)
    if np.any(U[0] <= 0):
        raise DomainError("reduced flux needs E > 0")
    return flux_norm(U) / (k.c * U[0])


def eddington_chi(f):
    f = np.asarray(f, dtype=float)
    if np.any(f < 0) or np.any(f > 1 + CHI_CLAMP):
        raise DomainError(f"reduced flux outside [0, 1]: {f.min()}..{f.max()}")
    f = np.minimum(f, 1.0)
    f2 = f * f
    chi = (3 + 4 * f2) / (5 + 2 * np.sqrt(4 - 3 * f2))
    return chi if chi.ndim else float(chi)


def _chi_unchecked(f):
    f2 = np.minimum(f, 1.0) ** 2
    return (3 + 4 * f2) / (5 + 2 * np.sqrt(4 - 3 * f2))


def pressure_tensor(s, k=CGS):
    """M1 pressure ``((1-chi)/2 I + (3 chi - 1)/2 n n^T) E``.

    Returns an array of shape ``(d, d, *cells)``.  In fewer than three
    dimensions this is the in-plane block of the 3D tensor, so its trace is
    ``E - (1 - chi)/2 E`` in 2D and ``chi E`` in 1D; the suppressed diagonal
    entries carry the rest (see :func:`out_of_plane_pressure`).
    """
    U = as_stacked(s)
    return _pressure(U, k.c, checked=True)


def out_of_plane_pressure(s, k=CGS):
    """Diagonal pressure entry along each suppressed axis, ``(1-chi)/2 E``."""
    U = as_stacked(s)
    chi = eddington_chi(reduced_flux(U, k))
    return 0.5 * (1 - chi) * U[0]


def _pressure(U, c, checked=False):
    d = U.shape[0] - 1
    E = U[0]
    F = U[1:]
    fnorm = np.sqrt(np.sum(F * F, axis=0))
    cE = c * E
    if checked:
        chi = eddington_chi(reduced_flux(U, PhysicalConstants(c=c)))
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            chi = _chi_unchecked(np.where(cE > 0, fnorm / cE, 0.0))
    iso = 0.5 * (1 - chi) * E
    directional = fnorm > DIRECTION_EPS * cE
    with np.errstate(divide="ignore", invalid="ignore"):
        # (3chi-1)/2 E n_a n_b  ==  aniso * F_a F_b
        aniso = np.where(directional, 0.5 * (3 * chi - 1) * E / (fnorm * fnorm), 0.0)
    P = np.empty((d, d) + E.shape)
    for a in range(d):
        for b in range(a, d):
            P[a, b] = aniso * F[a] * F[b]
            if a == b:
                P[a, b] += iso
            else:
                P[b, a] = P[a, b]
    return P


def is_admissible(s, k=CGS, tol=0.0):
    """Cellwise ``E > 0 and |F| <= c E (1 + tol)``; scalar bool for one cell."""
    U = as_stacked(s)
    E = U[0]
    ok = (E > 0) & (flux_norm(U) <= k.c * E * (1 + tol))
    return bool(ok) if np.ndim(ok) == 0 else ok


def all_admissible(U, c, tol=ADMISSIBLE_TOL):
    E = U[0]
    return bool(np.all(E > 0) and np.all(flux_norm(U) <= c * E * (1 + tol)))


def radiative_temperature(E, k=CGS):
    E = np.asarray(E, dtype=float)
    if np.any(E <= 0):
        raise DomainError("radiative temperature needs E > 0")
    T = (E / k.a_r) ** 0.25
    return T if T.ndim else float(T)


def energy_from_temperature(T, k=CGS):
    return k.a_r * np.asarray(T, dtype=float) ** 4
