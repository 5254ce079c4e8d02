import json

import numpy as np
import pytest

from annulus_shooter.cli import (
    PROFILE_HEADER,
    RunConfig,
    load_config,
    read_profile,
    run,
    write_profile,
)
from annulus_shooter.errors import InvalidParameter
from annulus_shooter.integrator import integrate
from annulus_shooter.model import ProblemSpec


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def test_solve_writes_summary_and_profile(tmp_path, capsys):
    out = tmp_path / "run"
    assert run(["--output-dir", str(out), "solve"]) == 0
    summary = json.loads((out / "solution.json").read_text())
    assert summary["gamma_star"] == pytest.approx(16.0333762, rel=1e-6)
    assert summary["boundary_residual"] <= 1e-8
    assert summary["termination"] == "HitZero"
    lines = (out / "profile.csv").read_text().splitlines()
    assert lines[0] == PROFILE_HEADER
    r0, u0 = (float(x) for x in lines[1].split(",")[:2])
    assert (r0, u0) == (1.0, 0.0)
    assert "gamma_star" in capsys.readouterr().out


def test_profile_round_trip(tmp_path):
    spec = ProblemSpec.symmetric(alpha=0.5)
    traj, _ = integrate(3.0, spec)
    write_profile(traj, tmp_path / "p.csv", spec)
    back = read_profile(tmp_path / "p.csv")
    assert np.array_equal(back["r"], traj.r)
    assert np.array_equal(back["u"], traj.u)
    assert np.array_equal(back["w"], traj.w)


def test_invalid_exponent_exits_2(tmp_path, capsys):
    code = run(["--output-dir", str(tmp_path), "--set", "problem.p=1.0", "solve"])
    assert code == 2
    assert "p <= 1+alpha" in capsys.readouterr().err


def test_empty_suffix_then_solve_exits_3(tmp_path):
    # supercritical exponent: every shot up to gamma = 0.5 is truncated
    args = ["--output-dir", str(tmp_path), "--set", "solver.gamma_max=0.5",
            "--set", "problem.dimension=4", "--set", "problem.p=4.0"]
    assert run(args + ["scan"]) == 0
    assert "HitZero" not in (tmp_path / "scan.csv").read_text()
    assert json.loads((tmp_path / "scan.json").read_text())["suffix_gamma_min"] is None
    assert run(args + ["solve"]) == 3


def test_rho_above_b_everywhere_exits_3(tmp_path):
    # shots return to zero, but never inside b
    assert run(["--output-dir", str(tmp_path), "--set", "solver.gamma_max=0.5", "solve"]) == 3


def test_unknown_keys_rejected(tmp_path):
    cfg = _write(tmp_path / "c.json", {"problem": ProblemSpec.symmetric().to_dict(), "colour": 1})
    assert run(["--config", cfg, "solve"]) == 2
    with pytest.raises(InvalidParameter):
        load_config(None, ["solver.nonsense=3"])


def test_config_file_and_overrides(tmp_path):
    cfg = _write(tmp_path / "c.json", {"problem": ProblemSpec.symmetric(p=4.0).to_dict(),
                                       "emit_energies": True})
    loaded = load_config(cfg, ["problem.b=3", "seed=7"])
    assert isinstance(loaded, RunConfig)
    assert (loaded.problem.p, loaded.problem.b, loaded.seed) == (4.0, 3.0, 7)
    assert loaded.emit_energies


def test_missing_config_file_exits_1(tmp_path):
    assert run(["--config", str(tmp_path / "nope.json"), "solve"]) == 1


def test_scan_csv(tmp_path):
    assert run(["--output-dir", str(tmp_path), "scan", "--gamma-min", "0.1",
                "--gamma-max", "100", "--points", "7"]) == 0
    rows = (tmp_path / "scan.csv").read_text().splitlines()
    assert rows[0] == "gamma,tau,u_at_tau,rho,du_at_rho,termination"
    assert len(rows) == 8
    assert rows[-1].endswith("HitZero")


def test_shoot_and_nodal(tmp_path):
    assert run(["--output-dir", str(tmp_path), "shoot", "--gamma", "5"]) == 0
    assert json.loads((tmp_path / "shot.json").read_text())["termination"] == "HitZero"
    assert run(["--output-dir", str(tmp_path), "nodal", "--k", "2"]) == 0
    assert len(json.loads((tmp_path / "nodal.json").read_text())["nodal_radii"]) == 1
    assert run(["--output-dir", str(tmp_path), "nodal", "--k", "0"]) == 2


def test_verify_with_energies(tmp_path):
    args = ["--output-dir", str(tmp_path), "--set", "emit_energies=true",
            "--set", "problem.alpha=1.0", "verify"]
    assert run(args) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["passed"]
    assert report["patch"]["max_pair_ratio"] < 0.5
    assert (tmp_path / "energies.csv").read_text().startswith("r,E1,E2,calE1,calE2")


def test_negative_solve(tmp_path):
    args = ["--output-dir", str(tmp_path), "--set", "problem.k_minus=1.5",
            "--set", "problem.K_minus=2.0", "--set", "problem.lambda_hi=2.0", "solve", "--negative"]
    assert run(args) == 0
    summary = json.loads((tmp_path / "solution.json").read_text())
    assert summary["sign"] == "Negative" and summary["u_at_tau"] < 0
