import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from adiabatic_piston.cli import config_hash, load_config, main
from adiabatic_piston.core import ConfigError


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_simulate_1d(tmp_path):
    cfg = _write(tmp_path / "c.json", {"M": 100, "Q0": 0.4, "E_left": [0.5], "E_right": [0.5], "tau_end": 1,
                                        "sample_every": 0.01})
    out = tmp_path / "run"
    assert main(["simulate-1d", "--config", cfg, "--out", str(out), "--seed", "3"]) == 0
    rows = _rows(out / "trajectory.csv")
    assert rows[0] == ["tau", "Q", "W", "E1_1", "E2_1"]
    assert len(rows) == 102
    ev = json.loads((out / "events.json").read_text())
    assert ev["energy_drift"] < 1e-12
    man = json.loads((out / "manifest.json").read_text())
    assert man["config_hash"] == config_hash(man["config"])
    assert man["seed"] == 3 and "trajectory.csv" in man["outputs"]


def test_identical_runs_identical_outputs(tmp_path):
    cfg = _write(tmp_path / "c.json", {"M": 1e3, "tau_end": 0.5, "E_left": [0.5, 0.2]})
    for name in ("a", "b"):
        assert main(["simulate-1d", "--config", cfg, "--out", str(tmp_path / name), "--seed", "11"]) == 0
    a = (tmp_path / "a" / "trajectory.csv").read_bytes()
    b = (tmp_path / "b" / "trajectory.csv").read_bytes()
    assert a == b
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma["config_hash"] == mb["config_hash"]


def test_flags_override_config(tmp_path):
    cfg = _write(tmp_path / "c.json", {"M": 1e3, "tau_end": 0.5})
    out = tmp_path / "o"
    assert main(["simulate-1d", "--config", cfg, "--out", str(out), "--mass", "400", "--tau-end", "0.2"]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["M"] == 400 and man["config"]["tau_end"] == 0.2


def test_out_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("ADIABATIC_PISTON_OUT", str(tmp_path / "env"))
    assert main(["simulate-1d", "--mass", "100", "--tau-end", "0.1"]) == 0
    assert (tmp_path / "env" / "manifest.json").exists()


def test_simulate_soft(tmp_path):
    cfg = _write(tmp_path / "c.json", {"M": 100, "delta": 0.05, "E_left": [0.1], "E_right": [0.15],
                                        "tau_end": 0.5, "sample_every": 0.05})
    out = tmp_path / "s"
    assert main(["simulate-soft", "--config", cfg, "--out", str(out)]) == 0
    e = _rows(out / "energies.csv")
    assert e[0] == ["tau", "t", "H", "relative_drift"]
    assert max(abs(float(r[3])) for r in e[1:]) < 1e-8
    assert json.loads((out / "summary.json").read_text())["energy_drift"] < 1e-8


def test_simulate_2d(tmp_path):
    out = tmp_path / "d"
    assert main(["simulate-2d", "--preset", "stadium-ends", "--mass", "100", "--tau-end", "0.5",
                 "--out", str(out)]) == 0
    ev = json.loads((out / "events.json").read_text())
    assert ev["preset"] == "stadium-ends" and ev["energy_drift"] < 1e-12


def test_average_equilibrium_constant(tmp_path):
    cfg = _write(tmp_path / "c.json", {"kind": "hard1d", "Q0": 0.4, "E_left": [0.4], "E_right": [0.6],
                                        "tau_end": 1, "step": 1e-3, "sample_every": 0.01})
    out = tmp_path / "a"
    assert main(["average", "--config", cfg, "--out", str(out)]) == 0
    rows = _rows(out / "trajectory.csv")
    assert rows[0][-1] == "Heff"
    data = np.array(rows[1:], float)
    assert data.shape[0] == 101
    assert np.max(np.abs(data[:, 1:] - data[0, 1:])) < 1e-12


def test_average_npiston(tmp_path):
    cfg = _write(tmp_path / "c.json", {"kind": "npiston", "Q": [0.3, 0.6], "W": [0.1, 0.0],
                                        "energies": [[0.5], [0.4], [0.5]], "tau_end": 0.5, "step": 1e-3})
    out = tmp_path / "n"
    assert main(["average", "--config", cfg, "--out", str(out)]) == 0
    assert _rows(out / "trajectory.csv")[0][:3] == ["tau", "Q1", "Q2"]
    assert json.loads((out / "summary.json").read_text())["heff_drift"] < 1e-10


def test_study_santalo_box(tmp_path):
    out = tmp_path / "st"
    assert main(["study", "santalo", "--preset", "box", "--samples", "100000", "--out", str(out)]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["santalo_predicted"] == pytest.approx(math.pi * 1.0 / (1.0 * 4.0), rel=1e-15)
    assert (out / "santalo.csv").exists()


def test_study_demos(tmp_path):
    cfg = _write(tmp_path / "c.json", {"eps_list": [0.1, 0.03, 0.01]})
    out = tmp_path / "dm"
    assert main(["study", "demos", "--config", cfg, "--out", str(out), "--threads", "1"]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert set(s["slopes"]) == {"time-periodic", "one-phase", "two-phase"}


def test_malformed_json(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"M": 100,\n "tau_end": }')
    assert main(["simulate-1d", "--config", str(bad), "--out", str(tmp_path / "x")]) == 1
    err = capsys.readouterr().err
    assert "line 2" in err and "column" in err


def test_load_config_not_object(tmp_path):
    p = tmp_path / "list.json"
    p.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(str(p))


def test_unknown_study_key(tmp_path):
    cfg = _write(tmp_path / "c.json", {"colour": "red"})
    assert main(["study", "demos", "--config", cfg, "--out", str(tmp_path / "x")]) == 1


def test_unknown_subcommand(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_numerical_failure_exit_2(tmp_path):
    cfg = _write(tmp_path / "c.json", {"M": 100, "delta": 0.05, "E_left": [0.5], "E_right": [0.5],
                                        "tau_end": 0.5, "step": 0.02})
    assert main(["simulate-soft", "--config", cfg, "--out", str(tmp_path / "x")]) == 2


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "adiabatic_piston", "average", "--out", str(tmp_path / "m"),
                        "--tau-end", "0.01"], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
