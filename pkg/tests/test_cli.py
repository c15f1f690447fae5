import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from impulsive_duffing.cli import main

SEMI = {
    "g": {"kind": "semilinear", "lambda_lo": 1.0, "lambda_hi": 3.0},
    "forcing": None,
    "impulse": {"t1": math.pi / 2},
}


def _write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def _csv(path):
    lines = [l for l in open(path) if not l.startswith("#")]
    rows = list(csv.DictReader(lines))
    return rows


def _strip_timestamp(path):
    text = open(path).read().splitlines()
    return [l for l in text if "timestamp" not in l]


def test_simulate_linear_four_pi(tmp_path):
    rc = main(["simulate", "--span", "0", str(4 * math.pi), "--start", "1", "0", "--out", str(tmp_path)])
    assert rc == 0
    rows = _csv(tmp_path / "trajectory.csv")
    assert float(rows[-1]["x"]) == pytest.approx(1.0, abs=1e-8)
    assert float(rows[-1]["y"]) == pytest.approx(0.0, abs=1e-8)
    flags = [r["impulse"] for r in rows if r["impulse"]]
    assert flags == ["pre", "post", "pre", "post"]


def test_simulate_sine_column(tmp_path):
    assert main(["simulate", "--start", "0", "2", "--samples", "50", "--out", str(tmp_path)]) == 0
    for r in _csv(tmp_path / "trajectory.csv"):
        assert float(r["x"]) == pytest.approx(2 * math.sin(float(r["t"])), abs=1e-8)


def test_simulate_semilinear_energy_column(tmp_path):
    cfg = _write(tmp_path, "semi.json", SEMI)
    assert main(["simulate", "--config", cfg, "--start", "40", "-10", "--out", str(tmp_path)]) == 0
    rows = _csv(tmp_path / "trajectory.csv")
    V0 = float(rows[0]["V"])
    # dense-output rows carry interpolation error on top of the step error
    assert max(float(r["abs_V_drift"]) for r in rows) < 1e-8 * V0


def test_tau_scan_outputs(tmp_path):
    assert main(["tau-scan", "--out", str(tmp_path), "--c-lo", "1", "--c-hi", "100", "--points", "20"]) == 0
    doc = json.loads((tmp_path / "annuli.json").read_text())
    assert doc["annuli"] == [] and "note" in doc
    cfg = _write(tmp_path, "semi.json", SEMI)
    assert main(["tau-scan", "--config", cfg, "--m", "2", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "annuli.json").read_text())
    assert len(doc["annuli"]) >= 3 and doc["best_m"] == 2
    assert doc["seed"] == 0 and doc["config"]["g"]["kind"] == "semilinear"
    rows = _csv(tmp_path / "tau_scan.csv")
    assert len(rows) == 200 and set(rows[0]) == {"c", "h", "h1", "tau"}


def test_exit_codes(tmp_path):
    assert main(["tau-scan", "--c-lo", "10", "--c-hi", "1", "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    bad = _write(tmp_path, "bad.json", {"g": {"kind": "semilinear", "growth": 0.5}})
    assert main(["simulate", "--config", bad, "--out", str(tmp_path)]) == 2
    assert main(["twist-check", "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--rel-tol", "-1", "--out", str(tmp_path)]) == 2


def test_numerical_failure_exit_code(tmp_path):
    # the force overflows at this amplitude and the integrator stops
    tiny = _write(tmp_path, "t.json", dict(SEMI, simulate={"start": [1e300, 1e300]}))
    assert main(["simulate", "--config", tiny, "--out", str(tmp_path)]) == 3


def test_twist_check_report_and_exit_code(tmp_path):
    cfg = _write(tmp_path, "semi.json", SEMI)
    assert main(["tau-scan", "--config", cfg, "--m", "2", "--out", str(tmp_path)]) == 0
    rc = main(["twist-check", "--config", cfg, "--annuli", str(tmp_path / "annuli.json"), "--samples", "8", "--out", str(tmp_path)])
    rep = json.loads((tmp_path / "twist_check.json").read_text())["report"]
    assert rc == (0 if rep["verdict"] == "pass" else 4)
    assert rep["samples"] == 8


def test_find_orbits_inline_annulus(tmp_path):
    cfg = dict(SEMI, find_orbits={"annulus": {"a": 120.3, "b": 482.8, "m": 2}, "grid": [1, 4]})
    path = _write(tmp_path, "f.json", cfg)
    assert main(["find-orbits", "--config", path, "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "orbits.json").read_text())
    assert len(doc["orbits"]) >= 2
    assert all(o["min_period_factor"] == 1 for o in doc["orbits"])


def test_gap_profile_autonomous_zero(tmp_path):
    cfg = _write(tmp_path, "semi.json", SEMI)
    assert main(["gap-profile", "--config", cfg, "--gammas", "100", "1000", "--n-angles", "4", "--out", str(tmp_path)]) == 0
    rows = _csv(tmp_path / "gap_profile.csv")
    assert [float(r["max_gap"]) for r in rows] == [0.0, 0.0]


def test_reproduce_linear_example(tmp_path):
    assert main(["reproduce-linear-example", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "linear_example.json").read_text())
    assert all(doc["checks"].values())


def test_outputs_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["simulate", "--seed", "7", "--out", str(d)]) == 0
        assert main(["tau-scan", "--c-lo", "1", "--c-hi", "10", "--points", "5", "--seed", "7", "--out", str(d)]) == 0
    for name in ("trajectory.csv", "tau_scan.csv", "annuli.json"):
        assert _strip_timestamp(a / name) == _strip_timestamp(b / name)
    assert "# seed: 7" in (a / "trajectory.csv").read_text()


def test_console_entry_point(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "impulsive_duffing", "simulate", "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert out.returncode == 0 and "winding" in out.stdout
