import numpy as np
import pytest

from m1gmg.mesh import PERIODIC, BoundaryCondition, Field, GridLevel

C = 2.99792458e10


def random_admissible(rng, shape, dim=2, c=C, fmax=1.0):
    """Stacked states with E in [0.5, 2) and reduced flux uniform in [0, fmax]."""
    shape = tuple(np.atleast_1d(shape))
    E = rng.uniform(0.5, 2.0, shape)
    f = rng.uniform(0.0, fmax, shape)
    direction = rng.normal(size=(dim,) + shape)
    direction /= np.linalg.norm(direction, axis=0)
    U = np.empty((1 + dim,) + shape)
    U[0] = E
    U[1:] = c * E * f * direction
    return U


def make_field(U, h=1.0, bc_kind=PERIODIC, origin=None):
    shape = U.shape[1:]
    dim = len(shape)
    grid = GridLevel(shape, h, origin or (0.0,) * dim)
    return Field.from_interior(U, grid, BoundaryCondition.uniform(bc_kind, dim))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    def report(number, title, ok, detail):
        line = f"criterion {number} ({title}): {'PASS' if ok else 'FAIL'} | {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
