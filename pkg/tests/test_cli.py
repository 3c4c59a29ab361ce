import dataclasses

import numpy as np
import pytest

from m1gmg import __version__
from m1gmg.cli import ConfigError, RunConfig, main, parse_config, read_snapshot, run

SMALL = "problem = beam\nsolver = jacobi\nnx = 16\ncfl = 100\neps_jacobi = 1e-3\n"


def test_defaults():
    cfg = parse_config("")
    assert cfg == RunConfig()
    assert (cfg.problem, cfg.solver, cfg.nx, cfg.cfl) == ("beam", "jacobi", 128, 2000.0)
    assert (cfg.nu0, cfg.nul, cfg.nu_coarse, cfg.pseudo_m) == (3, 1, 1, 3)
    assert (cfg.dtau_im0, cfg.eps_outer, cfg.eps_i, cfg.eps_d) == (1e-3, 1e-2, 1e-3, 1e-6)


def test_comments_and_overrides():
    cfg = parse_config("nx = 32  # fine grid\n\n# solver = gmg\n", {"cfl": "0.5", "l-max": "2"})
    assert cfg.nx == 32 and cfg.cfl == 0.5 and cfg.l_max == 2 and cfg.solver == "jacobi"


def test_unknown_key_names_key_and_line():
    with pytest.raises(ConfigError, match=r"run\.cfg:3.*'frobnicate'"):
        parse_config("nx = 16\n\nfrobnicate = 1\n", source="run.cfg")


def test_bad_value_names_key():
    with pytest.raises(ConfigError, match="nx"):
        parse_config("nx = many\n")


def test_counts_accept_exponent_notation():
    assert parse_config("max_iters = 1e4\n").max_iters == 10_000


def test_indivisible_grid_for_gmg_rejected():
    with pytest.raises(ConfigError, match="nx"):
        parse_config("solver = gmg\nl_max = 4\nnx = 100\n")


def test_large_cfl_accepted():
    assert parse_config("cfl = 2000\nsolver = gmg\nl_max = 4\n").cfl == 2000.0


@pytest.mark.parametrize("text", [
    "problem = sphere\n",
    "solver = newton\n",
    "ny = 64\n",
    "cfl = -1\n",
    "safety = 1.5\n",
    "eps_d = 0.1\n",
    "problem = beam\nbc = periodic\n",
    "nu0 = 0\n",
])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_run_writes_outputs(tmp_path):
    cfg = parse_config(SMALL, {"output_dir": str(tmp_path)})
    result, report = run(cfg)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["cut.csv", "report.txt", "residual.csv", "snapshot.csv"]
    snap = read_snapshot(tmp_path / "snapshot.csv")
    np.testing.assert_array_equal(snap["E"].reshape(16, 16), result.field.interior[0])
    np.testing.assert_array_equal(snap["Fx"].reshape(16, 16), result.field.interior[1])
    assert report["converged"] == 1 and report["admissible"] == 1
    assert (tmp_path / "residual.csv").read_text().splitlines()[0] == "iter_or_cycle,residual"


def test_gmg_residual_has_dtau_column(tmp_path):
    cfg = parse_config(SMALL, {"output_dir": str(tmp_path), "solver": "gmg", "l_max": "2"})
    run(cfg)
    header = (tmp_path / "residual.csv").read_text().splitlines()[0]
    assert header == "iter_or_cycle,residual,dtau_im"


def test_periodic_run_writes_conservation(tmp_path):
    cfg = parse_config("problem = riemann\nnx = 8\ncfl = 5\nt_final = 1e-11\n", {"output_dir": str(tmp_path)})
    run(cfg)
    assert (tmp_path / "conservation.csv").exists()
    assert not (tmp_path / "cut.csv").exists()


def test_runs_are_deterministic(tmp_path):
    outs = []
    for name in ("a", "b"):
        cfg = parse_config(SMALL, {"output_dir": str(tmp_path / name)})
        run(cfg)
        outs.append({f: (tmp_path / name / f).read_bytes() for f in ("snapshot.csv", "residual.csv", "cut.csv")})
    assert outs[0] == outs[1]


def test_main_exit_codes(tmp_path, capsys):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text(SMALL)
    assert main(["run", str(cfg_file), "--output_dir", str(tmp_path / "ok")]) == 0
    assert "converged=1" in capsys.readouterr().out
    # one iteration cannot reach the tolerance
    assert main(["run", str(cfg_file), "--output_dir", str(tmp_path / "no"), "--max_iters=1"]) == 1
    assert main(["run", str(cfg_file), "--nx", "abc"]) == 2
    assert "nx" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.cfg")]) == 2


def test_version_and_defaults(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert __version__ in capsys.readouterr().out
    assert main(["--list-defaults"]) == 0
    out = capsys.readouterr().out
    for f in dataclasses.fields(RunConfig):
        assert f"{f.name} = " in out


def test_no_command_is_usage_error(capsys):
    assert main([]) == 2
