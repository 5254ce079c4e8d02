"""Command-line front end.

    annulus-shooter [--config FILE] [--set section.key=VALUE ...] COMMAND [options]

COMMAND is one of shoot, solve, scan, verify, nodal. The JSON config has the
keys problem, solver, output_dir, emit_profile, emit_energies and seed; any
key may be overridden with --set (VALUE is parsed as JSON, falling back to a
plain string). Exit codes: 0 success, 2 invalid configuration, 3 no gamma
bracket, 4 numerical failure or a failed verification, 1 file errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .critical_patch import ball_profiles, contraction_estimate, solve_patch
from .diagnostics import energy_arrays, verification_report
from .errors import BracketNotFound, InvalidParameter, NumericalFailure
from .integrator import ShotOutcome, Trajectory, integrate
from .model import ProblemSpec, SolverControls, validate_spec
from .shooting import Solution, negative_solution, nodal_solution, scan_gamma, solve_bvp

__all__ = ["RunConfig", "load_config", "write_profile", "write_summary", "run", "main"]

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_BRACKET, EXIT_NUMERIC = 0, 1, 2, 3, 4
EXIT_FAILED_CHECK = EXIT_NUMERIC

PROFILE_HEADER = "r,u,du,w,E1,E2"
SCAN_HEADER = "gamma,tau,u_at_tau,rho,du_at_rho,termination"
_CONFIG_KEYS = {"problem", "solver", "output_dir", "emit_profile", "emit_energies", "seed"}


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemSpec = field(default_factory=ProblemSpec.symmetric)
    solver: SolverControls = field(default_factory=SolverControls)
    output_dir: str = "out"
    emit_profile: bool = True
    emit_energies: bool = False
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        unknown = set(data) - _CONFIG_KEYS
        if unknown:
            raise InvalidParameter(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        if "problem" in data:
            kw["problem"] = ProblemSpec.from_dict(_require_dict(data["problem"], "problem"))
        if "solver" in data:
            kw["solver"] = SolverControls.from_dict(_require_dict(data["solver"], "solver"))
        if "output_dir" in data:
            kw["output_dir"] = str(data["output_dir"])
        for key in ("emit_profile", "emit_energies"):
            if key in data:
                if not isinstance(data[key], bool):
                    raise InvalidParameter(f"{key} must be true or false")
                kw[key] = data[key]
        if "seed" in data:
            if not isinstance(data["seed"], int) or isinstance(data["seed"], bool):
                raise InvalidParameter("seed must be an integer")
            kw["seed"] = data["seed"]
        cfg = cls(**kw)
        validate_spec(cfg.problem)
        cfg.solver.validate(cfg.problem)
        return cfg

    def to_dict(self) -> dict:
        return {"problem": self.problem.to_dict(), "solver": self.solver.to_dict(),
                "output_dir": self.output_dir, "emit_profile": self.emit_profile,
                "emit_energies": self.emit_energies, "seed": self.seed}


def _require_dict(value, name: str) -> dict:
    if not isinstance(value, dict):
        raise InvalidParameter(f"{name} must be a JSON object")
    return value


def _apply_override(data: dict, item: str) -> None:
    if "=" not in item:
        raise InvalidParameter(f"--set expects key=value, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.split(".")
    if parts[0] not in _CONFIG_KEYS:
        raise InvalidParameter(f"unknown config key {parts[0]!r}")
    node = data
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise InvalidParameter(f"cannot set {key!r}")
    node[parts[-1]] = value


def load_config(path: Optional[str], overrides: Sequence[str] = ()) -> RunConfig:
    data: dict = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidParameter(f"config is not valid JSON: {exc}") from None
        _require_dict(data, "config")
    if overrides and "problem" not in data:
        data["problem"] = ProblemSpec.symmetric().to_dict()
    for item in overrides:
        _apply_override(data, item)
    try:
        return RunConfig.from_dict(data)
    except TypeError as exc:
        raise InvalidParameter(str(exc)) from None


# ---------------------------------------------------------------- outputs

def _fmt(x) -> str:
    return "%.17g" % x


def _json_float(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def write_profile(traj: Trajectory, path, spec: ProblemSpec) -> None:
    """CSV `r,u,du,w,E1,E2`, one row per sample, 17 significant digits."""
    e = energy_arrays(traj, spec)
    du = traj.du
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(PROFILE_HEADER + "\n")
        for i in range(len(traj.r)):
            fh.write(",".join(_fmt(v) for v in
                              (traj.r[i], traj.u[i], du[i], traj.w[i], e["E1"][i], e["E2"][i])))
            fh.write("\n")


def write_energies(traj: Trajectory, path, spec: ProblemSpec) -> None:
    e = energy_arrays(traj, spec)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("r,E1,E2,calE1,calE2\n")
        for i in range(len(traj.r)):
            fh.write(",".join(_fmt(e[k][i]) for k in ("r", "E1", "E2", "calE1", "calE2")))
            fh.write("\n")


def _dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def write_summary(outcome: ShotOutcome, cfg: RunConfig, path, extra: Optional[dict] = None) -> dict:
    summary = {
        "gamma": _json_float(outcome.gamma),
        "tau": _json_float(outcome.tau),
        "u_at_tau": _json_float(outcome.u_at_tau),
        "rho": _json_float(outcome.rho),
        "du_at_rho": _json_float(outcome.du_at_rho),
        "termination": outcome.termination.value,
        "spec": cfg.problem.to_dict(),
        "controls": cfg.solver.to_dict(),
        "version": __version__,
    }
    if extra:
        summary.update(extra)
    _dump_json(_clean(summary), path)
    return summary


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return _json_float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_scan(rows: Sequence[ShotOutcome], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(SCAN_HEADER + "\n")
        for row in rows:
            cells = [_fmt(row.gamma)]
            for v in (row.tau, row.u_at_tau, row.rho, row.du_at_rho):
                cells.append("" if v is None else _fmt(v))
            cells.append(row.termination.value)
            fh.write(",".join(cells) + "\n")


def read_profile(path) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols = list(zip(*[[float(x) for x in row] for row in reader]))
    return {name: np.array(col) for name, col in zip(header, cols)}


# ---------------------------------------------------------------- commands

def _workers(requested: Optional[int]) -> int:
    n = requested if requested is not None else 1
    cap = os.environ.get("ANNULUS_SHOOTER_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise InvalidParameter("ANNULUS_SHOOTER_THREADS must be an integer") from None
    return max(1, n)


def _emit_traj(traj: Trajectory, cfg: RunConfig, out: Path, spec: ProblemSpec) -> None:
    if cfg.emit_profile:
        write_profile(traj, out / "profile.csv", spec)
    if cfg.emit_energies:
        write_energies(traj, out / "energies.csv", spec)


def _solution_extra(sol: Solution) -> dict:
    return {
        "gamma_star": sol.gamma_star,
        "boundary_residual": sol.boundary_residual,
        "rho_error": sol.rho_error,
        "sign": sol.sign.value,
        "brackets_found": sol.brackets_found,
        "bisection_iterations": sol.iterations,
        "polished": sol.polished,
        "nodal_radii": list(sol.nodal_radii),
    }


def _cmd_shoot(args, cfg: RunConfig, out: Path) -> int:
    traj, outcome = integrate(args.gamma, cfg.problem, cfg.solver)
    write_summary(outcome, cfg, out / "shot.json", {"seed": cfg.seed})
    _emit_traj(traj, cfg, out, cfg.problem)
    print(json.dumps(_clean(outcome.as_row()), sort_keys=True))
    return EXIT_OK


def _cmd_solve(args, cfg: RunConfig, out: Path) -> int:
    solver = negative_solution if args.negative else solve_bvp
    sol = solver(cfg.problem, cfg.solver)
    extra = _solution_extra(sol)
    extra["seed"] = cfg.seed
    write_summary(sol.outcome, cfg, out / "solution.json", extra)
    _emit_traj(sol.trajectory, cfg, out, cfg.problem)
    print(json.dumps(_clean({"gamma_star": sol.gamma_star, "sign": sol.sign.value,
                             "boundary_residual": sol.boundary_residual}), sort_keys=True))
    return EXIT_OK


def _cmd_nodal(args, cfg: RunConfig, out: Path) -> int:
    sol = nodal_solution(cfg.problem, args.k, cfg.solver)
    extra = _solution_extra(sol)
    extra["seed"] = cfg.seed
    extra["k"] = args.k
    write_summary(sol.outcome, cfg, out / "nodal.json", extra)
    _emit_traj(sol.trajectory, cfg, out, cfg.problem)
    print(json.dumps(_clean({"gamma_star": sol.gamma_star, "nodal_radii": sol.nodal_radii,
                             "boundary_residual": sol.boundary_residual}), sort_keys=True))
    return EXIT_OK


def _cmd_scan(args, cfg: RunConfig, out: Path) -> int:
    g_min = cfg.solver.gamma_min if args.gamma_min is None else args.gamma_min
    g_max = cfg.solver.gamma_max if args.gamma_max is None else args.gamma_max
    points = cfg.solver.scan_points if args.points is None else args.points
    if not (0.0 < g_min < g_max) or points < 2:
        raise InvalidParameter("scan needs 0 < gamma-min < gamma-max and points >= 2")
    grid = np.geomspace(g_min, g_max, points)
    result = scan_gamma(grid, cfg.problem, cfg.solver, workers=_workers(args.workers))
    write_scan(result.rows, out / "scan.csv")
    _dump_json(_clean({"suffix_start": result.suffix_start,
                       "suffix_gamma_min": result.rows[result.suffix_start].gamma
                       if result.suffix_start < len(result.rows) else None,
                       "points": points, "spec": cfg.problem.to_dict(),
                       "controls": cfg.solver.to_dict(), "version": __version__}),
               out / "scan.json")
    print(f"{len(result.suffix)} of {points} shots return to zero")
    return EXIT_OK


def _patch_crosscheck(sol: Solution, cfg: RunConfig, pairs: int = 20) -> dict:
    """Contraction of T measured on random ball profiles at the solution's maximum.

    Run for every alpha (for alpha <= 0 the patch is a cross-check only).
    """
    out = sol.outcome
    frame = cfg.problem if sol.sign.value == "Positive" else cfg.problem.reflected()
    A = abs(out.u_at_tau)
    patch = solve_patch(out.tau, A, frame, cfg.solver, b_outer=max(cfg.problem.b, out.tau))
    rng = np.random.default_rng(cfg.seed)
    prof = ball_profiles(patch.grid, A, rng, 2 * pairs)
    ratios = [contraction_estimate(prof[2 * i], prof[2 * i + 1], patch.grid, out.tau, A, frame)
              for i in range(pairs)]
    sgn = 1.0 if sol.sign.value == "Positive" else -1.0
    u_traj, w_traj = sol.trajectory.evaluate(patch.r_exit)
    return {
        "delta": patch.delta,
        "iterates": patch.iterates,
        "final_defect": patch.final_defect,
        "max_pair_ratio": max(ratios),
        "u_exit_mismatch": abs(sgn * patch.u_exit - u_traj) / max(1.0, A),
        "w_exit_mismatch": abs(sgn * patch.w_exit - w_traj) / max(1.0, abs(patch.w_exit)),
    }


def _cmd_verify(args, cfg: RunConfig, out: Path) -> int:
    solver = negative_solution if args.negative else solve_bvp
    sol = solver(cfg.problem, cfg.solver)
    report = verification_report(sol.trajectory, sol.outcome, cfg.problem, cfg.solver)
    patch = _patch_crosscheck(sol, cfg)
    report["patch"] = patch
    report["checks"]["patch_contraction"] = patch["max_pair_ratio"] < 0.5
    report["checks"]["boundary_residual"] = sol.boundary_residual <= 1e-8
    report["passed"] = all(report["checks"].values())
    report.update(_solution_extra(sol))
    report.update({"seed": cfg.seed, "spec": cfg.problem.to_dict(),
                   "controls": cfg.solver.to_dict(), "version": __version__})
    _dump_json(_clean(report), out / "report.json")
    _emit_traj(sol.trajectory, cfg, out, cfg.problem)
    failed = sorted(k for k, v in report["checks"].items() if not v)
    print("verification passed" if not failed else "verification FAILED: " + ", ".join(failed))
    return EXIT_OK if not failed else EXIT_FAILED_CHECK


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="annulus-shooter", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--config", help="JSON run configuration")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config key, e.g. problem.p=3 or solver.rel_tol=1e-10")
    ap.add_argument("--output-dir", help="overrides output_dir")
    ap.add_argument("--seed", type=int, help="overrides seed")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("shoot", help="one shot from u(a)=0, u'(a)=gamma")
    p.add_argument("--gamma", type=float, required=True)
    p = sub.add_parser("solve", help="positive (or negative) solution of the BVP")
    p.add_argument("--negative", action="store_true")
    p = sub.add_parser("scan", help="rho(gamma) over a log-spaced grid")
    p.add_argument("--gamma-min", type=float)
    p.add_argument("--gamma-max", type=float)
    p.add_argument("--points", type=int)
    p.add_argument("--workers", type=int, help="worker processes (capped by ANNULUS_SHOOTER_THREADS)")
    p = sub.add_parser("verify", help="solve and run every diagnostic")
    p.add_argument("--negative", action="store_true")
    p = sub.add_parser("nodal", help="sign-changing solution with k nodal regions")
    p.add_argument("--k", type=int, required=True)
    return ap


_COMMANDS = {"shoot": _cmd_shoot, "solve": _cmd_solve, "scan": _cmd_scan,
             "verify": _cmd_verify, "nodal": _cmd_nodal}


def run(argv: Optional[Sequence[str]] = None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        overrides = list(args.set)
        if args.output_dir is not None:
            overrides.append("output_dir=" + json.dumps(args.output_dir))
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        cfg = load_config(args.config, overrides)
        if args.command == "nodal" and args.k < 1:
            raise InvalidParameter("k must be >= 1")
        if args.command == "shoot" and not args.gamma > 0.0:
            raise InvalidParameter("gamma must be positive")
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](args, cfg, out)
    except InvalidParameter as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BracketNotFound as exc:
        print(f"no bracket: {exc}", file=sys.stderr)
        return EXIT_BRACKET
    except NumericalFailure as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run())
