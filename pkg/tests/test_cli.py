import json

import pytest

from geomq import cli
from geomq.errors import ConfigError


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.startswith("{") else out)


def test_curvature_sphere(capsys):
    code, rep = run(capsys, "curvature", "--chart", "sphere:R=1", "--at", "0.7,0.3")
    assert code == 0 and rep["pass"]
    assert rep["records"][0]["values"]["principal"] == pytest.approx([1.0, 1.0])
    assert set(rep) == {"version", "config", "records", "pass"}
    assert set(rep["records"][0]) == {"name", "inputs", "values", "residual", "tolerance", "pass",
                                      "seconds"}


def test_curvature_defaults_and_multiple_points(capsys):
    _, rep = run(capsys, "curvature", "--chart", "cylinder:R=2")
    assert rep["records"][0]["values"]["principal"] == pytest.approx([0.5, 0.0])
    _, rep = run(capsys, "curvature", "--chart", "circle:R=1", "--at", "0.1", "--at", "2.0")
    assert [r["name"] for r in rep["records"]] == ["curvature/000", "curvature/001"]
    assert rep["records"][1]["values"]["principal"] == pytest.approx([1.0])


@pytest.mark.parametrize("chart,value", [("flat_torus:R1=1,R2=2", -0.15625),
                                         ("sphere:n=4", 0.375), ("line", 0.0)])
def test_potential(capsys, chart, value):
    code, rep = run(capsys, "potential", "--chart", chart)
    assert code == 0
    values = rep["records"][0]["values"]
    for key in ("vq_general_invariant", "vq_numeric"):
        assert values[key] == pytest.approx(value, abs=1e-7)


def test_verify_prokhorov_suite(capsys):
    code, rep = run(capsys, "verify", "prokhorov", "--suite", "random20", "--seed", "1")
    assert code == 0 and len(rep["records"]) == 20
    assert max(r["residual"] for r in rep["records"]) <= 1e-5


@pytest.mark.parametrize("target", ["divn", "vq", "stereo"])
def test_verify_suites_pass(capsys, target):
    code, rep = run(capsys, "verify", target, "--seed", "4")
    assert code == 0 and rep["records"]


def test_verify_detexp(capsys):
    code, rep = run(capsys, "verify", "detexp", "--diagonal")
    assert code == 0
    assert all(r["values"]["slope"] >= 2.7 for r in rep["records"])
    code, rep = run(capsys, "verify", "detexp")
    assert code == 0 and all(r["tolerance"] is None for r in rep["records"])


def test_verify_series_reports_nan_slope_as_null(capsys):
    code, rep = run(capsys, "verify", "series", "--chart", "ellipse:a=1,b=0.6")
    values = rep["records"][0]["values"]
    assert values["slope"] is None and values["terminates"] is True
    code, rep = run(capsys, "verify", "series", "--chart", "ellipsoid", "--at", "0.7,0.5,0.3")
    assert code == 0 and 2.7 <= rep["records"][0]["values"]["slope"] <= 3.3


def test_spectrum_layer_writes_json_and_csv(capsys, tmp_path):
    out = tmp_path / "layer.json"
    code = cli.main(["spectrum", "layer", "--chart", "circle:R=1", "--delta", "0.05", "--nev", "6",
                     "--grid", "64", "--out", str(out)])
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["records"][0]["values"]["subtracted"][0] == pytest.approx(-0.125, rel=0.02)
    lines = (tmp_path / "layer.csv").read_text().splitlines()
    assert lines[0] == "index,eigenvalue,subtracted,degeneracy"
    assert len(lines) == 7
    assert sorted(p.name for p in tmp_path.iterdir()) == ["layer.csv", "layer.json"]


def test_spectrum_shell_csv(capsys):
    code, out = run(capsys, "spectrum", "shell", "--R", "1", "--delta", "0.025", "--lmax", "3",
                    "--format", "csv")
    assert code == 0
    rows = [line.split(",") for line in out.splitlines()[1:]]
    assert len(rows) == 16
    levels = sorted({round(float(r[2]), 2) for r in rows})
    assert levels == pytest.approx([0.0, 1.0, 3.0, 6.0], abs=0.01)


def test_spectrum_surface(capsys):
    code, rep = run(capsys, "spectrum", "surface", "--chart", "circle", "--nev", "3")
    assert code == 0
    assert rep["records"][0]["values"]["eigenvalues"] == pytest.approx([-0.125, 0.375, 0.375],
                                                                       abs=1e-6)


def test_spectrum_sweep_reports_slopes(capsys):
    code, rep = run(capsys, "spectrum", "sweep", "--chart", "circle:R=1",
                    "--deltas", "0.1,0.05,0.025", "--grid", "64")
    values = rep["records"][0]["values"]
    assert len(values["slopes"]) == 2
    # slopes outside the configured band fail the record
    in_band = all(0.7 <= s <= 1.5 for s in values["slopes"])
    assert code == (0 if in_band else 1)


def test_spectrum_factorization(capsys):
    code, rep = run(capsys, "spectrum", "factorization", "--chart", "circle", "--delta", "0.05",
                    "--grid", "64")
    assert code == 0 and rep["records"][0]["residual"] <= 1e-3


def test_solver_error_becomes_failed_record(capsys):
    code, rep = run(capsys, "spectrum", "layer", "--chart", "circle", "--delta", "0.7",
                    "--grid", "64")
    assert code == 1
    assert "OffsetDegenerate" in rep["records"][0]["values"]["error"]


@pytest.mark.parametrize("argv", [
    ["curvature", "--chart", "nosuch"],
    ["curvature", "--chart", "circle", "--seed", "-1"],
    ["curvature", "--chart", "circle", "--seed", str(2**64)],
    ["verify", "vq", "--tolerance", "-1"],
    ["verify", "vq", "--suite", "many"],
    ["curvature"],
    ["curvature", "--chart", "sphere", "--at", "0.1"],
])
def test_config_errors_exit_2(capsys, argv):
    assert cli.main(argv) == 2
    assert "error" in capsys.readouterr().err


def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        cli.main(["spectrum", "nosuch"])
    assert exc.value.code == 2


def test_config_file_and_flag_override(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"chart": "sphere:R=2", "at": [[0.7, 0.3]]}))
    _, rep = run(capsys, "curvature", "--config", str(cfg))
    assert rep["records"][0]["values"]["principal"] == pytest.approx([0.5, 0.5])
    _, rep = run(capsys, "curvature", "--config", str(cfg), "--chart", "sphere:R=4")
    assert rep["records"][0]["values"]["principal"] == pytest.approx([0.25, 0.25])
    cfg.write_text(json.dumps({"chart": "circle", "colour": "red"}))
    assert cli.main(["curvature", "--config", str(cfg)]) == 2


def test_config_round_trip(capsys):
    _, rep = run(capsys, "verify", "vq", "--seed", "3", "--suite", "random4")
    echoed = cli.RunConfig.from_dict(rep["config"])
    assert echoed == cli.RunConfig(command="verify", target="vq", seed=3, suite="random4")
    assert cli.RunConfig.from_dict(echoed.to_dict()) == echoed


def test_run_config_validation():
    with pytest.raises(ConfigError):
        cli.RunConfig.from_dict({"command": "curvature", "bogus": 1})
    with pytest.raises(ConfigError):
        cli.RunConfig(command="spectrum", target=None)
    with pytest.raises(ConfigError):
        cli.RunConfig(command="curvature", seed=True)


def test_reports_are_byte_identical(capsys, monkeypatch):
    argv = ["verify", "prokhorov", "--suite", "random5", "--seed", "9"]
    cli.main(argv)
    first = capsys.readouterr().out
    monkeypatch.setenv("GEOMQ_THREADS", "1")
    cli.main(argv)
    assert capsys.readouterr().out == first


def test_timing_is_opt_in(capsys):
    _, rep = run(capsys, "curvature", "--chart", "circle")
    assert rep["records"][0]["seconds"] is None
    _, rep = run(capsys, "curvature", "--chart", "circle", "--timing")
    assert rep["records"][0]["seconds"] >= 0


def test_bad_thread_count(capsys, monkeypatch):
    monkeypatch.setenv("GEOMQ_THREADS", "lots")
    assert cli.main(["curvature", "--chart", "circle"]) == 2


def test_clean_handles_numpy_and_nan():
    import numpy as np

    assert cli.clean({"a": np.array([1.0, np.nan]), "b": np.int64(3), "c": -0.0}) == {
        "a": [1.0, None], "b": 3, "c": 0.0}


def test_module_entry_point():
    import subprocess
    import sys

    out = subprocess.run([sys.executable, "-m", "geomq", "curvature", "--chart", "circle",
                          "--format", "csv"], capture_output=True, text=True)
    assert out.returncode == 0
    assert out.stdout.splitlines()[0] == "name,residual,tolerance,pass"
