"""Tests for the command-line entry point"""

import csv
import json
import re

import pytest

from errors import ConfigError
from field_io import read_field
from run_solver import (
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_OK,
    EXIT_SOLVER,
    RunConfig,
    coerce_value,
    load_run_config,
    main,
)

LOG_LINE = re.compile(r"^iter=\d+ wnorm=\S+ fnorm=\S+$")


def _run(*args) -> int:
    return main([*args, "--quiet"])


def _error_record(capsys) -> dict:
    lines = [line for line in capsys.readouterr().err.splitlines() if line.startswith("{")]
    assert len(lines) == 1
    return json.loads(lines[0])


def test_solve_writes_artifacts(tmp_path):
    out = tmp_path / "solve"
    assert _run("solve", "--n", "8", "--ra", "10", "-o", str(out)) == EXIT_OK
    for name in ("psi.vtk", "theta.vtk", "newton.log", "diagnostics.txt", "run.json"):
        assert (out / name).exists(), name

    log = (out / "newton.log").read_text().splitlines()
    assert log and all(LOG_LINE.match(line) for line in log)
    diagnostics = (out / "diagnostics.txt").read_text()
    assert "Well-posedness diagnostics" in diagnostics
    assert "Errors against the exact solution (coupled)" in diagnostics

    summary = json.loads((out / "run.json").read_text())
    assert summary["status"] == "ok"
    assert summary["config"]["n"] == 8
    assert summary["config"]["ra"] == [10.0]


def test_solve_csv_and_matrix_dump(tmp_path):
    assert _run("solve", "--n", "4", "--format", "csv", "--dump-matrix", "-o", str(tmp_path)) == EXIT_OK
    points, values = read_field(tmp_path / "psi.csv")
    assert points.shape == (25, 2)
    assert values.shape == (25,)
    assert (tmp_path / "tangent.mtx").read_text().startswith("%%MatrixMarket")


@pytest.mark.parametrize("args", [
    ("solve", "--n", "1"),
    ("solve", "--epsilon", "-1"),
    ("solve", "--ra", "1,2"),
    ("solve", "--ra", "-3"),
    ("solve", "--n", "600"),
    ("convergence", "--levels", "8,16"),
    ("convergence", "--levels", "8,12,24"),
    ("sweep-ra", "--ra", "0,abc"),
])
def test_config_errors(tmp_path, capsys, args):
    assert _run(*args, "-o", str(tmp_path)) == EXIT_CONFIG
    record = _error_record(capsys)
    assert record["status"] == "error"
    assert record["kind"] == "ConfigError"
    assert record["message"]


def test_argparse_rejects_bad_integer():
    with pytest.raises(SystemExit) as info:
        main(["solve", "--n", "abc"])
    assert info.value.code == EXIT_CONFIG


def test_divergence_exit_code(tmp_path, capsys):
    assert _run("solve", "--n", "4", "--max-iterations", "1", "-o", str(tmp_path)) == EXIT_SOLVER
    record = _error_record(capsys)
    assert record["kind"] == "NewtonDivergenceError"
    assert "no convergence" in record["message"]
    assert len((tmp_path / "newton.log").read_text().splitlines()) == 1
    assert not (tmp_path / "psi.vtk").exists()


def test_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert _run("solve", "--n", "4", "-o", str(blocker / "out")) == EXIT_IO
    assert _error_record(capsys)["status"] == "error"


def test_convergence_command(tmp_path):
    assert _run("convergence", "--levels", "4,8,16", "--ra", "10", "-o", str(tmp_path)) == EXIT_OK
    with open(tmp_path / "rates.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    assert [int(row["n"]) for row in rows] == [4, 8, 16]
    assert {"rate_psi_l2", "rate_psi_h1", "rate_theta_l2", "rate_theta_h1"} <= set(rows[0])
    assert (tmp_path / "rates.txt").exists()
    assert (tmp_path / "rates_interpolant.csv").exists()


@pytest.mark.slow
def test_convergence_default_levels(tmp_path):
    assert _run("convergence", "--levels", "8,16,32,64", "--ra", "10", "-o", str(tmp_path)) == EXIT_OK
    with open(tmp_path / "rates.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 4
    for row in rows[2:]:
        assert 0.9 <= float(row["rate_psi_h1"]) <= 1.2
        assert 0.9 <= float(row["rate_theta_h1"]) <= 1.2


def test_sweep_warm_starts(tmp_path):
    assert _run("sweep-ra", "--n", "8", "--ra", "0,10,50", "-o", str(tmp_path)) == EXIT_OK
    for tag in ("0", "10", "50"):
        assert (tmp_path / f"psi_Ra{tag}.vtk").exists()
        assert (tmp_path / f"theta_Ra{tag}.vtk").exists()
        assert (tmp_path / f"newton_Ra{tag}.log").exists()
    with open(tmp_path / "sweep.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    assert [row["warm_started"] for row in rows] == ["False", "True", "True"]
    assert all(row["converged"] == "True" for row in rows)


def test_sweep_cold_start(tmp_path):
    assert _run("sweep-ra", "--n", "4", "--ra", "1,2", "--no-warm-start", "-o", str(tmp_path)) == EXIT_OK
    with open(tmp_path / "sweep.csv", newline="") as f:
        assert [row["warm_started"] for row in csv.DictReader(f)] == ["False", "False"]


def test_sweep_reports_each_failure(tmp_path, capsys):
    code = _run("sweep-ra", "--n", "4", "--ra", "0,10", "--max-iterations", "1", "-o", str(tmp_path))
    assert code == EXIT_SOLVER
    with open(tmp_path / "sweep.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 2
    assert all(row["converged"] == "False" for row in rows)
    assert "Ra = 0, 10" in _error_record(capsys)["message"]


def test_diagnostics_command(tmp_path):
    code = _run("diagnostics", "--n", "8", "--ra", "0.5", "--source-scale", "1e-3", "-o", str(tmp_path))
    assert code == EXIT_OK
    with open(tmp_path / "diagnostics.csv", newline="") as f:
        values = dict(list(csv.reader(f))[1:])
    assert values["b_positive"] == "True"
    assert values["apriori_bound_holds"] == "True"
    assert float(values["poincare"]) > 0.2
    # sources are scaled, so no exact-solution errors
    assert "Errors against" not in (tmp_path / "diagnostics.txt").read_text()


def test_diagnostics_stability_sweep(tmp_path):
    code = _run("diagnostics", "--n", "8", "--ra", "0.5", "--source-scale", "1e-3",
                "--stability-scales", "1e-4,2e-4", "-o", str(tmp_path))
    assert code == EXIT_OK
    with open(tmp_path / "stability.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    assert [float(row["scale"]) for row in rows] == [1e-4, 2e-4]
    assert all(row["converged"] == "True" for row in rows)
    ratio = float(rows[1]["psi_gradient_norm"]) / float(rows[0]["psi_gradient_norm"])
    assert ratio == pytest.approx(2.0, rel=0.01)
    assert (tmp_path / "stability.txt").read_text().startswith("Stability sweep")


def test_key_value_config_file(tmp_path):
    config = tmp_path / "run.cfg"
    config.write_text("n = 6\nformat = csv\noutput-dir = {}\n".format(tmp_path / "from_file"))
    assert main(["solve", "--config", str(config), "--quiet"]) == EXIT_OK
    assert (tmp_path / "from_file" / "psi.csv").exists()


def test_flags_override_file_and_env(tmp_path, monkeypatch):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"n": 6, "ra": 3}))
    monkeypatch.setenv("FEM_EPSILON", "1e-9")
    monkeypatch.setenv("FEM_N", "12")
    resolved = load_run_config("solve", {"n": 4}, config)
    assert resolved.n == 4
    assert resolved.ra == (3.0,)
    assert resolved.epsilon == 1e-9


def test_env_layer(monkeypatch):
    monkeypatch.setenv("FEM_N", "12")
    monkeypatch.setenv("FEM_WARM_START", "no")
    resolved = load_run_config("sweep-ra", {"ra": "0,1"})
    assert resolved.n == 12
    assert resolved.warm_start is False
    assert resolved.ra == (0.0, 1.0)


def test_unknown_config_key(tmp_path, capsys):
    config = tmp_path / "run.cfg"
    config.write_text("mesh_size = 4\n")
    assert main(["solve", "--config", str(config), "-o", str(tmp_path), "--quiet"]) == EXIT_CONFIG
    assert "mesh_size" in _error_record(capsys)["message"]


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="Cannot read config file"):
        load_run_config("solve", {}, tmp_path / "absent.cfg")


def test_coerce_value():
    assert coerce_value("ra", "0, 10,50") == [0.0, 10.0, 50.0]
    assert coerce_value("ra", 7) == [7]
    assert coerce_value("levels", "8,16,32") == [8, 16, 32]
    assert coerce_value("n", "16") == 16
    assert coerce_value("data_bound_l", "none") is None
    assert coerce_value("dump_matrix", "on") is True
    with pytest.raises(ValueError):
        coerce_value("warm_start", "maybe")


def test_run_config_invariants(tmp_path):
    with pytest.raises(ConfigError, match="n must be >= 2"):
        RunConfig(command="solve", n=1)
    with pytest.raises(ConfigError, match="must not be empty"):
        RunConfig(command="sweep-ra", ra=())
    with pytest.raises(ConfigError, match="epsilon"):
        RunConfig(command="solve", epsilon=0.0)
    assert RunConfig(command="sweep-ra", ra=(0.0, 10.0)).newton_config().epsilon == 1e-8


def test_ignored_settings():
    config = RunConfig(command="convergence", levels=(4, 8, 16), source_scale=2.0)
    assert config.ignored_settings() == ["source_scale"]
    assert RunConfig(command="sweep-ra", stability_scales=(1e-4,), dump_matrix=True).ignored_settings() == [
        "stability_scales",
        "dump_matrix",
    ]
    assert RunConfig(command="diagnostics", stability_scales=(1e-4,), source_scale=0.5).ignored_settings() == []
    assert RunConfig(command="solve").ignored_settings() == []


def test_ignored_flag_warns(tmp_path, capsys):
    assert main(["solve", "--n", "4", "--stability-scales", "1e-4", "-o", str(tmp_path)]) == EXIT_OK
    err = capsys.readouterr().err
    assert "stability_scales has no effect on solve" in err
