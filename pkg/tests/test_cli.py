import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from spinkapitza.cli import main, read_trajectory_csv, run_id, trajectory_csv
from spinkapitza.integrate import IntegratorConfig, integrate
from spinkapitza.model import DimensionlessSpec, ModelVariant, SpinState, from_dimensionless

SHORT_SWEEP = ["--horizon-slow-periods", "5"]


def run(tmp_path, *argv):
    return main([*argv, "--out", str(tmp_path)])


def test_simulate_bounded(tmp_path):
    code = run(tmp_path, "simulate", "--model", "driven1d", "--a", "0.5", "--gamma-ratio", "200",
               "--theta0", "0.05", "--slow-periods", "100")
    assert code == 0
    t, states = read_trajectory_csv(tmp_path / "trajectory.csv")
    assert np.max(np.abs(states[:, 0])) < 0.5
    manifest = json.loads((tmp_path / "simulate_manifest.json").read_text())
    assert manifest["diverged_at"] is None
    assert manifest["outputs"] == ["trajectory.csv"]
    assert manifest["config"]["a"] == 0.5


def test_simulate_constant_at_fixed_point(tmp_path):
    code = run(tmp_path, "simulate", "--model", "undriven", "--a", "2.0",
               "--theta0", repr(math.pi), "--theta-dot0", "0")
    assert code == 0
    _, states = read_trajectory_csv(tmp_path / "trajectory.csv")
    assert np.max(np.abs(states[:, 0] - math.pi)) < 1e-12


def test_simulate_rejects_zero_drive_ratio(tmp_path, capsys):
    out = tmp_path / "never"
    code = main(["simulate", "--model", "driven1d", "--a", "0.5", "--gamma-ratio", "0",
                 "--out", str(out)])
    assert code == 2
    assert "configuration error" in capsys.readouterr().err
    assert not out.exists()


def test_simulate_divergence_is_not_an_error(tmp_path):
    code = run(tmp_path, "simulate", "--model", "driven1d", "--theta-dot0", "1e308",
               "--slow-periods", "1")
    assert code == 0
    manifest = json.loads((tmp_path / "simulate_manifest.json").read_text())
    assert manifest["diverged_at"] == 0.0
    assert manifest["divergence_reason"] == "non-finite"


def test_trajectory_csv_round_trip(tmp_path):
    p = from_dimensionless(DimensionlessSpec(a=0.2, gamma_ratio=100.0, lambda_L=0.3, drive_phase=0.3))
    traj = integrate(ModelVariant.FULL_2D, SpinState(0.4, 0.1, 0.2), p,
                     IntegratorConfig(t_end=5.0, sample_stride=3))
    path = tmp_path / "t.csv"
    text = trajectory_csv(traj.times, traj.states)
    path.write_bytes(text.encode("utf-8"))
    assert text.splitlines()[0] == "t,theta,theta_dot,phi,phi_dot"
    assert "\r" not in text
    t, states = read_trajectory_csv(path)
    assert np.array_equal(t, traj.times)
    assert np.array_equal(states, traj.states)


def test_simulate_is_reproducible(tmp_path):
    args = ["simulate", "--a", "0.18", "--phase", "0.4", "--slow-periods", "3"]
    assert run(tmp_path / "a", *args) == 0
    assert run(tmp_path / "b", *args) == 0
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() == \
        (tmp_path / "b" / "trajectory.csv").read_bytes()
    ma = json.loads((tmp_path / "a" / "simulate_manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "simulate_manifest.json").read_text())
    assert ma["run_id"] == mb["run_id"]


def test_run_id_ignores_output_location_and_parallelism():
    cfg = {"a": 0.1, "out": "x", "parallel": 1}
    assert run_id("sweep", cfg) == run_id("sweep", {**cfg, "out": "y", "parallel": 8})
    assert run_id("sweep", cfg) != run_id("sweep", {**cfg, "a": 0.2})
    assert run_id("sweep", cfg) != run_id("potential", cfg)


def test_potential_outputs(tmp_path):
    assert run(tmp_path, "potential", "--a", "0.01", "0.1", "--svg", "potential.svg") == 0
    for a in ("0.01", "0.1"):
        rows = np.loadtxt(tmp_path / f"potential_a{a}.csv", delimiter=",", skiprows=1)
        assert rows.shape == (721, 2)
        assert rows[360, 1] == pytest.approx(float(a), rel=1e-12)
    root = ET.parse(tmp_path / "potential.svg").getroot()
    polylines = [e for e in root.iter() if e.tag.endswith("polyline")]
    assert len(polylines) == 2
    assert sum("stroke-dasharray" in e.attrib for e in polylines) == 1


def test_potential_limits(tmp_path):
    assert run(tmp_path, "potential", "--a", "0") == 0
    rows = np.loadtxt(tmp_path / "potential_a0.csv", delimiter=",", skiprows=1)
    assert np.allclose(rows[:, 1], np.sin(rows[:, 0]) ** 2, atol=1e-15)
    assert abs(rows[360, 1]) < 1e-15 and abs(rows[0, 1]) < 1e-15

    assert run(tmp_path, "potential", "--a", "0.1", "--lambda-l", "1.0") == 0
    rows = np.loadtxt(tmp_path / "potential_a0.1.csv", delimiter=",", skiprows=1)
    assert np.allclose(rows[:, 1], 0.1 * np.cos(rows[:, 0]), atol=1e-15)


def test_equilibria(tmp_path):
    def report(a):
        assert run(tmp_path, "equilibria", "--a", str(a)) == 0
        return json.loads((tmp_path / "equilibria.json").read_text())

    r = report(0.02)
    assert [e["classification"] for e in r["equilibria"]] == ["stable", "stable"]
    assert r["delta_E_per_I"] == pytest.approx(0.02, rel=1e-14)
    r = report(2.5)
    assert r["equilibria"][0]["classification"] == "unstable"
    r = report(0.72)
    assert r["omega_minus"] == pytest.approx(0.8, rel=1e-12)
    assert r["omega_plus"] == pytest.approx(1.16619, rel=1e-5)


def test_sweep_outputs(tmp_path):
    assert run(tmp_path, "sweep", *SHORT_SWEEP) == 0
    summary = json.loads((tmp_path / "sweep_summary.json").read_text())
    assert summary["cells"] == 5 and summary["disagreements"] == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert len(lines) == 6
    header = lines[0].split(",")
    col = header.index("analytic")
    flags = [line.split(",")[col] for line in lines[1:]]
    assert sum(flags[k] != flags[k + 1] for k in range(4)) == 1


def test_sweep_parallel_byte_identical(tmp_path):
    args = ["sweep", "--a", "0.5", "1.8", "2.2", "--gamma-ratio", "100", "200", *SHORT_SWEEP]
    assert run(tmp_path / "serial", *args) == 0
    assert run(tmp_path / "par", *args, "--parallel", "4") == 0
    for name in ("sweep.csv", "sweep_summary.json"):
        assert (tmp_path / "serial" / name).read_bytes() == (tmp_path / "par" / name).read_bytes()
    ms = json.loads((tmp_path / "serial" / "sweep_manifest.json").read_text())
    mp = json.loads((tmp_path / "par" / "sweep_manifest.json").read_text())
    assert ms["run_id"] == mp["run_id"]


def test_physical(tmp_path, capsys):
    assert run(tmp_path, "physical") == 0
    rep = json.loads((tmp_path / "physical.json").read_text())
    rows = {r["B_tesla"]: r for r in rep["fields"]}
    assert rows[0.35]["a"] < 1e-6
    assert rows[10.0]["condition_satisfied"]
    assert rows[10.0]["omega_L_quoted"] == 1e13
    assert rows[10.0]["omega_L"] == pytest.approx(8.79e11, rel=1e-2)
    assert "audit" in rep and "omega_sq_ratio" in rep["audit"]
    assert json.loads(capsys.readouterr().out) == rep


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"a": 2.5, "gamma_ratio": 100.0}))
    assert main(["equilibria", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    r = json.loads((tmp_path / "equilibria.json").read_text())
    assert r["equilibria"][0]["classification"] == "unstable"
    assert main(["equilibria", "--config", str(cfg), "--a", "0.5", "--out", str(tmp_path)]) == 0
    r = json.loads((tmp_path / "equilibria.json").read_text())
    assert r["equilibria"][0]["classification"] == "stable"


@pytest.mark.parametrize("argv", [
    ["simulate", "--method", "FixedRK4", "--dt", "-1"],
    ["simulate", "--model", "driven1d", "--lambda-l", "0.3"],
    ["potential", "--n", "2"],
    ["potential", "--a", "-1"],
    ["equilibria", "--gamma-ratio", "0"],
    ["sweep", "--a", "0.5", "-1.0"],
    ["sweep", "--limit", "0"],
    ["physical", "--B", "0.35", "-1"],
    ["physical", "--gamma-ratio-cap", "10"],
    ["verify", "--only", "A99"],
])
def test_fail_fast(tmp_path, argv):
    out = tmp_path / "out"
    assert main([*argv, "--out", str(out)]) == 2
    assert not out.exists()


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"a": 0.5, "bogus": 1}))
    assert main(["equilibria", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()


def test_verify_single_criterion(tmp_path, capsys):
    assert run(tmp_path, "verify", "--only", "A1") == 0
    payload = json.loads((tmp_path / "acceptance.json").read_text())
    assert payload["passed"] and [c["id"] for c in payload["criteria"]] == ["A1"]
    assert "A1 PASS" in capsys.readouterr().out
