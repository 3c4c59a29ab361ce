"""Command-line front end.

    m1gmg run CONFIG [--key value ...]
    m1gmg --list-defaults
    m1gmg --version

The config file holds flat ``key = value`` lines; ``#`` starts a comment.
Command-line pairs override file entries.
"""

import argparse
import csv
import dataclasses
import logging
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import __version__
from .m1_core import PhysicalConstants, all_admissible, flux_norm
from .mesh import PERIODIC, ZERO_GRADIENT, ConfigurationError, GridLevel
from .multigrid import MGParams, PseudoTimeParams
from .problems import SOLVERS, SolverSettings, beam_spec, midline_cut, riemann_spec, run_problem

log = logging.getLogger(__name__)

PROBLEMS = ("beam", "riemann")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    problem: str = "beam"
    solver: str = "jacobi"
    nx: int = 128
    ny: int = 0  # 0 means equal to nx
    cfl: float = 2000.0
    l_max: int = 1
    nu0: int = 3
    nul: int = 1
    nu_coarse: int = 1
    pseudo_m: int = 3
    dtau_im0: float = 1e-3
    safety: float = 0.9
    eps_outer: float = 1e-2
    eps_jacobi: float = 1e-5
    eps_i: float = 1e-3
    eps_d: float = 1e-6
    max_cycles: int = 10_000
    max_iters: int = 100_000
    max_steps: int = 1_000_000
    bc: str = ""  # riemann only: periodic or zero-gradient
    t_final: float = 1e-11  # riemann only
    output_dir: str = "m1gmg_out"
    c: float = 2.99792458e10
    a_r: float = 7.5657e-15
    threads: int = 1

    def validate(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem: expected one of {PROBLEMS}, got {self.problem!r}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver: expected one of {SOLVERS}, got {self.solver!r}")
        if self.ny not in (0, self.nx):
            raise ConfigError(f"ny: only square grids are supported (nx={self.nx}, ny={self.ny})")
        if self.nx < 2:
            raise ConfigError(f"nx: need at least 2 cells, got {self.nx}")
        for key in ("cfl", "dtau_im0", "eps_outer", "eps_jacobi", "eps_i", "eps_d",
                    "t_final", "c", "a_r"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key}: must be positive, got {getattr(self, key)}")
        for key in ("l_max", "nu0", "nul", "nu_coarse", "pseudo_m", "max_cycles",
                    "max_iters", "max_steps", "threads"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key}: must be >= 1, got {getattr(self, key)}")
        if not self.eps_d < self.eps_i:
            raise ConfigError("eps_d: must be smaller than eps_i")
        if not 0 < self.safety < 1:
            raise ConfigError(f"safety: must lie in (0, 1), got {self.safety}")
        if self.bc not in ("", PERIODIC, ZERO_GRADIENT):
            raise ConfigError(f"bc: expected {PERIODIC} or {ZERO_GRADIENT}, got {self.bc!r}")
        if self.bc and self.problem == "beam":
            raise ConfigError("bc: the beam problem has fixed boundaries")
        if self.solver == "gmg":
            grid = GridLevel((self.nx, self.nx), 1.0, (0.0, 0.0))
            try:
                for _ in range(self.l_max - 1):
                    grid = grid.coarsen()
            except ConfigurationError as exc:
                raise ConfigError(f"nx: {self.nx} cells do not support l_max={self.l_max} ({exc})") from None
        return self


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _as_int(raw):
    try:
        return int(raw)
    except ValueError:
        val = float(raw)  # accept 1e4 style counts
        if not val.is_integer():
            raise
        return int(val)


def _convert(key, raw, where):
    ftype = _FIELDS[key].type
    name = ftype if isinstance(ftype, str) else ftype.__name__
    conv = {"int": _as_int, "float": float, "str": str}[name]
    try:
        return conv(raw.strip())
    except ValueError:
        raise ConfigError(f"{where}: {key}: cannot parse {raw.strip()!r} as {name}") from None


def parse_config(text="", overrides=None, source="<config>"):
    """Build a validated :class:`RunConfig` from file text plus overrides.

    ``overrides`` is a mapping or a sequence of ``(key, value)`` string pairs.
    Errors name the offending key and the line it came from.
    """
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        where = f"{source}:{lineno}"
        if "=" not in body:
            raise ConfigError(f"{where}: expected 'key = value', got {body!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELDS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        values[key] = _convert(key, raw, where)
    pairs = overrides.items() if isinstance(overrides, dict) else (overrides or [])
    for key, raw in pairs:
        key = key.replace("-", "_")
        if key not in _FIELDS:
            raise ConfigError(f"command line: unknown key {key!r}")
        values[key] = _convert(key, str(raw), "command line")
    return RunConfig(**values).validate()


def build_problem(cfg):
    k = PhysicalConstants(cfg.c, cfg.a_r)
    if cfg.problem == "beam":
        return beam_spec(cfg.nx, k)
    return riemann_spec(cfg.nx, cfg.bc or PERIODIC, k, cfg.t_final)


def build_settings(cfg):
    pseudo = PseudoTimeParams(dtau_im=cfg.dtau_im0, m=cfg.pseudo_m, safety=cfg.safety,
                              eps_i=cfg.eps_i, eps_d=cfg.eps_d)
    mg = MGParams(l_max=cfg.l_max, nu0=cfg.nu0, nul=cfg.nul, nu_coarse=cfg.nu_coarse,
                  eps_outer=cfg.eps_outer, max_cycles=cfg.max_cycles, pseudo=pseudo)
    return SolverSettings(cfg.solver, cfg.cfl, cfg.eps_jacobi, cfg.max_iters, mg, cfg.max_steps)


# -- output -------------------------------------------------------------------

def _fmt(x):
    return format(float(x), ".17g")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([r if isinstance(r, (int, np.integer)) else _fmt(r) for r in row])


def write_snapshot(path, field, c):
    X, Y = field.grid.mesh()
    U = field.interior
    with np.errstate(divide="ignore", invalid="ignore"):
        f = flux_norm(U) / (c * U[0])
    cols = [X.ravel(), Y.ravel(), U[0].ravel(), U[1].ravel(), U[2].ravel(), f.ravel()]
    _write_csv(path, ("x", "y", "E", "Fx", "Fy", "f"), zip(*cols))


def read_snapshot(path):
    """Columns of a snapshot CSV as float arrays keyed by header."""
    with open(path) as fh:
        rows = list(csv.reader(fh))
    data = np.array(rows[1:], dtype=float)
    return {name: data[:, i] for i, name in enumerate(rows[0])}


def run(cfg):
    """Execute ``cfg``; writes all artefacts and returns ``(result, report)``."""
    if cfg.threads > 1:
        log.info("threads=%d requested; the numpy kernels run single-threaded", cfg.threads)
    spec = build_problem(cfg)
    settings = build_settings(cfg)
    result = run_problem(spec, settings)
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    c = spec.constants.c
    write_snapshot(os.path.join(out, "snapshot.csv"), result.field, c)
    if cfg.solver == "gmg":
        _write_csv(os.path.join(out, "residual.csv"), ("iter_or_cycle", "residual", "dtau_im"),
                   result.residual_rows)
    else:
        _write_csv(os.path.join(out, "residual.csv"), ("iter_or_cycle", "residual"),
                   [r[:2] for r in result.residual_rows])
    if spec.bc.periodic:
        _write_csv(os.path.join(out, "conservation.csv"), ("step", "rel_error"), result.conservation)
    if cfg.problem == "beam":
        x, cut = midline_cut(result.field, spec.reference_energy)
        _write_csv(os.path.join(out, "cut.csv"), ("x", "E_normalized"), zip(x, cut))
    admissible = all_admissible(result.field.interior, c)
    report = {
        "version": __version__,
        "problem": cfg.problem,
        "solver": cfg.solver,
        "nx": cfg.nx,
        "ny": cfg.ny or cfg.nx,
        "cfl": cfg.cfl,
        "dt": result.dt,
        "steps": result.steps,
        "iterations": result.iterations,
        "converged": int(result.converged),
        "admissible": int(admissible),
        "final_residual": result.final_residual,
        "wall_time_s": result.wall_time,
        "cell_updates": result.cell_updates,
        "cell_updates_per_s": result.cell_updates / result.wall_time if result.wall_time > 0 else 0.0,
        "memory_bytes": result.workspace_bytes,
        "max_conservation_error": max((e for _, e in result.conservation), default=0.0),
        "aborted_subcycles": result.aborted_subcycles,
    }
    with open(os.path.join(out, "report.txt"), "w") as fh:
        for key, val in report.items():
            fh.write(f"{key}={val!r}\n" if isinstance(val, float) else f"{key}={val}\n")
    return result, report


def _override_pairs(extra):
    pairs = []
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise ConfigError(f"command line: expected --key, got {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"command line: {key}: missing value")
            val = extra[i + 1]
            i += 2
        pairs.append((key, val))
    return pairs


def main(argv=None):
    parser = argparse.ArgumentParser(prog="m1gmg", description=__doc__.splitlines()[0] if __doc__ else None)
    parser.add_argument("--version", action="version", version=f"m1gmg {__version__}")
    parser.add_argument("--list-defaults", action="store_true", help="print every config key with its default")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")
    p_run = sub.add_parser("run", help="run one configuration")
    p_run.add_argument("config", help="key = value file ('-' for none)")
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.list_defaults:
        for key, val in dataclasses.asdict(RunConfig()).items():
            print(f"{key} = {val}")
        return 0
    if args.command != "run":
        parser.print_usage(sys.stderr)
        return 2
    try:
        text = ""
        if args.config != "-":
            with open(args.config) as fh:
                text = fh.read()
        cfg = parse_config(text, _override_pairs(extra), source=args.config)
    except (ConfigError, OSError) as exc:
        print(f"m1gmg: error: {exc}", file=sys.stderr)
        return 2
    result, report = run(cfg)
    for key in ("iterations", "converged", "final_residual", "wall_time_s"):
        print(f"{key}={report[key]}")
    return 0 if result.converged and report["admissible"] else 1


if __name__ == "__main__":
    sys.exit(main())
