import json
import subprocess
import sys

import pytest

from lsarmax.cli import main


def _cfg(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


SIM = """
family = "logt"
kernel_param = 5
beta = [1.0, 0.5]
tau = [0.0]
kappa = [0.5]
zeta = [0.3]
n = 150
seed = 3
"""

MC = """
beta = [1.0, 0.7]
kappa = [0.6]
zeta = [0.3]
n_grid = [60]
phi_grid = [0.5, 1.0]
replicates = 4
seed = 1
"""


def _last_error(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    return json.loads(err[0])


def test_simulate_fit_diagnose_pipeline(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["simulate", "--config", _cfg(tmp_path / "sim.toml", SIM), "--output", str(out)]) == 0
    assert (out / "simulated.csv").read_text().startswith("t,y,x1\n")
    fit_cfg = _cfg(
        tmp_path / "fit.toml",
        'data = "out/simulated.csv"\nresponse = "y"\ncovariates = ["x1"]\nfamily = "logt"\n'
        'kernel_param = 5\np = 1\nq = 1\nformat = ["json", "text", "csv"]\n',
    )
    assert main(["fit", "--config", fit_cfg, "--output", str(out)]) == 0
    doc = json.loads((out / "fit.json").read_text())
    assert doc["kind"] == "fit" and doc["data_source"]["response"] == "y"
    assert (out / "fit.txt").exists() and (out / "fit.csv").exists()
    assert main(["diagnose", "--fit", str(out / "fit.json"), "--envelope-b", "19", "--output", str(out)]) == 0
    for name in ("diagnostics.json", "residuals.csv", "acf.csv", "envelope.csv"):
        assert (out / name).exists()


def test_kernel_grid_profile(tmp_path):
    out = tmp_path / "o"
    assert main(["simulate", "--config", _cfg(tmp_path / "sim.toml", SIM), "--output", str(out)]) == 0
    cfg = _cfg(
        tmp_path / "fit.toml",
        'data = "o/simulated.csv"\nresponse = "y"\ncovariates = ["x1"]\nfamily = "logt"\n'
        "kernel_grid = [3, 5, 30]\np = 1\nq = 1\n",
    )
    assert main(["fit", "--config", cfg, "--output", str(out)]) == 0
    lines = (out / "profile.csv").read_text().splitlines()
    assert lines[0] == "kernel_param,loglik" and len(lines) == 4


def test_mc_command(tmp_path):
    out = tmp_path / "mc"
    assert main(["mc", "--config", _cfg(tmp_path / "mc.toml", MC), "--output", str(out)]) == 0
    assert (out / "mc.csv").read_text().startswith("n,parameter,bias_phi=0.5")
    assert json.loads((out / "mc.json").read_text())["kind"] == "monte_carlo"


def test_theory_command(capsys):
    assert main(["theory", "--kappa", "0.6", "--zeta", "0.3", "--lags", "2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "lag,psi,autocov,autocorr"
    assert float(lines[2].split(",")[3]) == pytest.approx(0.73241, abs=5e-6)
    assert main(["theory", "--kappa", "1.0", "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["stationary"] is False and "autocorr" not in doc


def test_mortality_design_flags(tmp_path, capsys):
    cfg = _cfg(tmp_path / "m.toml", 'design = "mortality"\n')
    assert main(["fit", "--config", cfg, "--output", str(tmp_path / "a")]) == 0
    centered = json.loads((tmp_path / "a" / "fit.json").read_text())
    assert main(["fit", "--config", cfg, "--uncentered", "--output", str(tmp_path / "b")]) == 0
    raw = json.loads((tmp_path / "b" / "fit.json").read_text())
    assert raw["data_source"]["temperature_centered"] is False
    # the two parametrizations give the same fitted model with different coefficients
    assert raw["loglik"] == pytest.approx(centered["loglik"], abs=1e-6)
    assert raw["estimate"][0] != pytest.approx(centered["estimate"][0], abs=1e-3)


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("LSARMAX_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["simulate", "--config", _cfg(tmp_path / "s.toml", SIM)]) == 0
    assert (tmp_path / "env" / "simulated.csv").exists()


def test_seed_flag_overrides_config(tmp_path):
    cfg = _cfg(tmp_path / "s.toml", SIM)
    main(["simulate", "--config", cfg, "--output", str(tmp_path / "a")])
    main(["simulate", "--config", cfg, "--seed", "4", "--output", str(tmp_path / "b")])
    main(["simulate", "--config", cfg, "--seed", "3", "--output", str(tmp_path / "c")])
    a, b, c = ((tmp_path / d / "simulated.csv").read_text() for d in "abc")
    assert a != b and a == c


@pytest.mark.parametrize(
    "argv_text,kind",
    [
        ('bogus = 1\n', "ConfigError"),
        ('n = "ten"\n', "ConfigError"),
        ('[table]\nx = 1\n', "ConfigError"),
        ('kappa = [1.5]\nn = 3000\nburnin = 0\n', "NonFiniteError"),
    ],
)
def test_failures_are_single_json_lines(tmp_path, capsys, argv_text, kind):
    assert main(["simulate", "--config", _cfg(tmp_path / "bad.toml", argv_text), "--output", str(tmp_path)]) != 0
    assert _last_error(capsys)["error"] == kind


def test_usage_and_missing_files(tmp_path, capsys):
    assert main(["frobnicate"]) != 0
    assert "usage" in _last_error(capsys)["message"]
    assert main(["fit", "--config", str(tmp_path / "none.toml")]) != 0
    assert _last_error(capsys)["error"] == "FileNotFoundError"
    bad = tmp_path / "y.csv"
    bad.write_text("y,x\n1,1\n-2,2\n3,3\n")
    cfg = _cfg(tmp_path / "f.toml", 'data = "y.csv"\nresponse = "y"\ncovariates = ["x"]\n')
    assert main(["fit", "--config", cfg, "--output", str(tmp_path)]) != 0
    err = _last_error(capsys)
    assert err["error"] == "CsvDataError" and "row 2" in err["message"]


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "lsarmax.cli", "theory", "--kappa", "0.5", "--lags", "1"],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[0] == "lag,psi,autocov,autocorr"
