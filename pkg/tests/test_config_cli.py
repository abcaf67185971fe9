import csv
import json
import math
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from hyplab.cli import EXIT_BUDGET, EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main, report_schema
from hyplab.config import EXECUTION_KNOBS, KNOBS, ConfigError, resolve


def _report(path, name):
    return json.loads((path / f"{name}.json").read_text())


def _bytes_without_timestamp(path):
    lines = path.read_text().splitlines(keepends=True)
    return "".join(ln for ln in lines if '"timestamp"' not in ln)


# -- configuration --------------------------------------------------------------------


def test_defaults_resolve():
    cfg = resolve("orbit")
    assert cfg.preset == "genus2-octagon" and cfg.R == 10.0
    assert set(cfg.to_dict()) == {"experiment"} | (set(KNOBS) - set(EXECUTION_KNOBS))


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown"):
        resolve("orbit", {"radius": 3.0})
    with pytest.raises(ConfigError):
        resolve("nonsense")


@pytest.mark.parametrize(
    "bad",
    [{"R": -1.0}, {"R": math.inf}, {"preset": "torus"}, {"cap": 2.5}, {"x": [0.9, 0.9]}, {"radii": [9.0, 8.0]}, {"d_min": 9.0}],
)
def test_out_of_range_rejected(bad):
    with pytest.raises(ConfigError):
        resolve("shadow", bad)


def test_flags_override_file(tmp_path):
    cfg_file = tmp_path / "run.toml"
    cfg_file.write_text('preset = "schottky2"\nR = 5.0\n')
    out = tmp_path / "out"
    assert main(["orbit", "--config", str(cfg_file), "--R", "4", "--out", str(out)]) == EXIT_OK
    rep = _report(out, "orbit")
    assert rep["config"]["preset"] == "schottky2"
    assert rep["config"]["R"] == 4.0


def test_threads_from_environment(monkeypatch):
    monkeypatch.setenv("HYPLAB_THREADS", "4")
    assert resolve("hts").threads == 4
    monkeypatch.setenv("HYPLAB_THREADS", "many")
    with pytest.raises(ConfigError):
        resolve("hts")


# -- exit codes -----------------------------------------------------------------------


def test_exit_config_error(tmp_path):
    assert main(["orbit", "--R", "-3", "--out", str(tmp_path)]) == EXIT_CONFIG
    bad = tmp_path / "bad.toml"
    bad.write_text("R = [\n")
    assert main(["orbit", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    unknown = tmp_path / "unknown.toml"
    unknown.write_text("colour = 1\n")
    assert main(["orbit", "--config", str(unknown), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["orbit", "--config", str(tmp_path / "missing.toml"), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_exit_budget(tmp_path):
    assert main(["orbit", "--R", "12", "--cap", "1000", "--out", str(tmp_path)]) == EXIT_BUDGET


def test_exit_numeric(tmp_path, capsys):
    # no closed geodesic is shorter than the systole
    assert main(["equi", "--t", "2", "--out", str(tmp_path)]) == EXIT_NUMERIC
    assert "equi" in capsys.readouterr().err


def test_experiment_argument_error(tmp_path):
    # the Lyapunov average needs a horizon of at least 50
    assert main(["lyapunov", "--T", "5", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_bad_flag_exits_two(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["orbit", "--no-such-flag", "1"])
    assert exc.value.code == 2


# -- reports --------------------------------------------------------------------------


def test_count_writes_csv_and_summary(tmp_path):
    assert main(["count", "--preset", "schottky2", "--t-max", "8", "--out", str(tmp_path)]) == EXIT_OK
    rep = _report(tmp_path, "count")
    assert rep["artifacts"] == ["count.csv"]
    with open(tmp_path / "count.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "count", "ratio"]
    assert len(rows) - 1 == 16
    assert float(rows[-1][2]) == rep["results"]["final_ratio"]


def test_riccati_csv_matches_tanh(tmp_path):
    assert main(["riccati", "--K", "-1", "--u0", "0", "--T", "10", "--dt", "0.001", "--out", str(tmp_path)]) == EXIT_OK
    data = np.loadtxt(tmp_path / "riccati.csv", delimiter=",", skiprows=1)
    t, u = data[:, 0], data[:, 1]
    # u' + u^2 + K = 0 from u(0) = 0 gives tanh(t) forward; -tanh(t) is the same solution at -t
    assert np.max(np.abs(u - np.tanh(t))) < 1e-7


def test_csv_seventeen_digits(tmp_path):
    assert main(["riccati", "--T", "1", "--dt", "0.1", "--out", str(tmp_path)]) == EXIT_OK
    row = (tmp_path / "riccati.csv").read_text().splitlines()[3].split(",")
    assert float(row[1]) == float(f"{float(row[1]):.17g}")
    assert "e" in row[1] or len(row[1].lstrip("-").replace(".", "").lstrip("0")) >= 15


@pytest.mark.parametrize(
    "argv",
    [
        ["orbit", "--R", "6"],
        ["exponent", "--radii", "6", "7", "8"],
        ["volume", "--t", "4", "--n-dirs", "4"],
        ["lyapunov", "--T", "50", "--window", "5"],
        ["green", "--S", "2", "4", "8"],
        ["hts", "--radii", "6", "7", "8", "--n-geodesics", "16", "--T", "5"],
    ],
)
def test_reports_validate_against_schema(tmp_path, argv):
    assert main(argv + ["--out", str(tmp_path)]) == EXIT_OK
    rep = _report(tmp_path, argv[0].replace("-", "_"))
    jsonschema.validate(rep, report_schema())
    assert rep["schema_version"] == "1.0"
    assert "threads" not in rep["config"] and "out" not in rep["config"]


# -- determinism ----------------------------------------------------------------------


@pytest.mark.parametrize(
    "argv",
    [
        ["hts", "--preset", "schottky2", "--radii", "6", "7", "8", "--n-geodesics", "200", "--T", "10", "--core-radius", "0.5"],
        ["shadow", "--samples", "12", "--seed", "3"],
    ],
)
def test_byte_identical_across_threads(tmp_path, monkeypatch, argv):
    outs = []
    for threads in ("1", "4", "8"):
        monkeypatch.setenv("HYPLAB_THREADS", threads)
        out = tmp_path / threads
        assert main(argv + ["--out", str(out)]) == EXIT_OK
        outs.append(out)
    name = argv[0]
    ref = _bytes_without_timestamp(outs[0] / f"{name}.json")
    for out in outs[1:]:
        assert _bytes_without_timestamp(out / f"{name}.json") == ref
        for art in _report(out, name)["artifacts"]:
            assert (out / art).read_bytes() == (outs[0] / art).read_bytes()


def test_console_script(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "hyplab.cli", "orbit", "--R", "3", "--out", str(tmp_path)],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == EXIT_OK, proc.stderr
    assert _report(tmp_path, "orbit")["results"]["elements"] >= 1
