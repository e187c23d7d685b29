"""Command-line front end: ``ficon <command> --config <path> --out <dir> [--seed N]``.

Exit status: 0 success, 2 invalid configuration, 3 solver failure,
4 property check failed.  Every run writes ``manifest.json`` listing the
config, a sha256 per output file, a combined content hash and the wall time.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .forward import (SolverError, default_K, dt_threshold, energy_estimate_check, level_coefficients,
                      solve_linear_forward, solve_semilinear_forward, write_solution_csv)
from .grid import SpaceTimeField, build_grid, discrete_norm
from .hum import (ControlProblem, ConvergenceError, OptimalityError, duality_identity, epsilon_sweep,
                  recover_adjoint_and_check, simulate_control, solve_penalized_control, write_sweep_csv)
from .model import ConfigError, build_problem
from .observability import SampleError, ensemble_constant, write_report_json, write_samples_csv
from .trajectory import (DivergenceError, bump_control, make_target_trajectory, solve_trajectory_control,
                         write_history_csv)
from .weights import (WeightError, WeightParameters, build_weight_system, export_weights_csv,
                      verify_ordering)

__all__ = ["COMMANDS", "PropertyFailure", "load_config", "run", "main"]

COMMANDS = ("forward", "control", "trajectory", "observability", "sweep", "weights-check")
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_PROPERTY = 0, 2, 3, 4
DEFAULT_GRID = {"n_minus": 16, "n_plus": 16, "n_steps": 32}
DEFAULT_EPSILONS = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
KKT_TOL = 1e-6


class PropertyFailure(RuntimeError):
    """A run completed but one of its checked properties does not hold."""


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return raw


def _section(cfg: dict, name: str) -> dict:
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"field '{name}' must be an object")
    return sec


def _problem(cfg: dict):
    raw = cfg["problem"] if "problem" in cfg else cfg
    if not isinstance(raw, dict):
        raise ConfigError("field 'problem' must be an object")
    return build_problem(raw)


def _grid(cfg: dict, geometry):
    g = {**DEFAULT_GRID, **_section(cfg, "grid")}
    unknown = set(g) - set(DEFAULT_GRID)
    if unknown:
        raise ConfigError(f"unknown grid field(s): {sorted(unknown)}")
    try:
        return build_grid(geometry, g["n_minus"], g["n_plus"], g["n_steps"], quiet=True)
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from exc


def _weights(cfg: dict, geometry):
    raw = _section(cfg, "weights")
    names = {f.name for f in fields(WeightParameters)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"unknown weights field(s): {sorted(unknown)}")
    return build_weight_system(geometry, WeightParameters(**raw))


def _control_options(sec: dict) -> dict:
    allowed = ("freeze", "penalty", "solver", "tol", "maxiter")
    return {k: sec[k] for k in allowed if k in sec}


def _json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# commands; each returns a summary dict and writes its files into ``out``
# ---------------------------------------------------------------------------

def _cmd_forward(cfg, out: Path, seed):
    spec = _problem(cfg)
    grid = _grid(cfg, spec.geometry)
    if spec.nonlinearity is None:
        K = default_K(spec)
        w = solve_linear_forward(spec, grid, K=K)
    else:
        K = 0.0
        w = solve_semilinear_forward(spec, grid, mode="newton", K=K)
    write_solution_csv(w, out / "solution.csv")
    summary = {"K": K, "dt_threshold": dt_threshold(spec, grid, K),
               "terminal_norm": discrete_norm(w, region="slice"),
               "energy_ratio": energy_estimate_check(w, spec, grid)}
    if not np.all(np.isfinite(w.values)):
        raise SolverError("forward solution is not finite")
    return summary


def _control_problem(cfg):
    spec = _problem(cfg)
    grid = _grid(cfg, spec.geometry)
    ws = _weights(cfg, spec.geometry)
    sec = _section(cfg, "control")
    eps = float(sec.get("epsilon", 1e-2))
    return ControlProblem(spec, grid, ws, eps, **_control_options(sec))


def _cmd_control(cfg, out: Path, seed):
    cp = _control_problem(cfg)
    sol = solve_penalized_control(cp)
    a = np.array([level_coefficients(cp.spec, cp.grid, t).a for t in cp.grid.times])
    sim = simulate_control(sol, cp)
    write_solution_csv(SpaceTimeField(a * sol.u.values, cp.grid), out / "control.csv")
    write_solution_csv(sim, out / "state.csv")
    kkt = recover_adjoint_and_check(sol, cp)
    dual = duality_identity(sol, cp)
    summary = {"epsilon": cp.epsilon, "J": sol.J_value, "J_terms": list(sol.J_terms),
               "terminal_norm": discrete_norm(sim, region="slice"),
               "penalized_terminal_norm": sol.terminal_norm, "pde_residual": sol.residual_pde,
               "cg_iters": sol.cg_iterations, "optimality_residuals": kkt, "duality_gap": dual["gap"]}
    bad = {k: v for k, v in kkt.items() if not v <= KKT_TOL}
    if bad:
        raise PropertyFailure(f"optimality residuals above {KKT_TOL:g}: {bad}")
    return summary


def _cmd_sweep(cfg, out: Path, seed):
    cp = _control_problem(cfg)
    eps = _section(cfg, "sweep").get("epsilons", DEFAULT_EPSILONS)
    rows = epsilon_sweep(cp, eps, check=False)
    write_sweep_csv(rows, out / "sweep.csv")
    errors = [r for r in rows if "error" in r]
    if errors:
        raise ConvergenceError("sweep rows failed: " + "; ".join(f"eps={r['epsilon']:g}: {r['error']}"
                                                                 for r in errors))
    norms = [r["terminal_norm"] for r in rows]
    summary = {"rows": len(rows), "terminal_norms": norms,
               "penalized_terminal_norms": [r["penalized_terminal_norm"] for r in rows]}
    if any(b >= a > 0 for a, b in zip(norms, norms[1:])):
        raise PropertyFailure(f"terminal norm is not strictly decreasing: {norms}")
    return summary


def _cmd_trajectory(cfg, out: Path, seed):
    spec = _problem(cfg)
    grid = _grid(cfg, spec.geometry)
    ws = _weights(cfg, spec.geometry)
    sec = _section(cfg, "trajectory")
    tc = {"amp": 2.0, "freq": 2.0, **sec.get("target_control", {})}
    pert = {"amp": 1e-2, "mode": 1, **sec.get("perturbation", {})}
    traj = make_target_trajectory(spec, grid, bump_control(grid, float(tc["amp"]), float(tc["freq"])))
    geom = spec.geometry
    x = grid.x_nodes
    w0 = traj.w_bar.values[0] + float(pert["amp"]) * np.sin(int(pert["mode"]) * math.pi * (x - geom.a)
                                                            / geom.length)
    res = solve_trajectory_control(spec, grid, ws, traj, w0, epsilon=float(sec.get("epsilon", 1e-8)),
                                   max_iters=int(sec.get("max_iters", 8)), tol=float(sec.get("tol", 1e-4)),
                                   metric=sec.get("metric", "L2"),
                                   **_control_options(_section(sec, "control")))
    write_history_csv(res.history, out / "history.csv")
    write_solution_csv(res.control, out / "control.csv")
    write_solution_csv(res.state, out / "state.csv")
    return {"iterations": res.iterations, "terminal_errors": [h["terminal_error"] for h in res.history],
            "target_residual": traj.residual}


def _cmd_observability(cfg, out: Path, seed):
    if seed is None:
        raise ConfigError("observability needs a seed (--seed or field 'seed')")
    spec = _problem(cfg)
    grid = _grid(cfg, spec.geometry)
    ws = _weights(cfg, spec.geometry)
    sec = _section(cfg, "observability")
    report = ensemble_constant(spec, grid, ws, n_samples=sec.get("n_samples", 20), seed=seed,
                               s_hat_factors=tuple(sec.get("s_hat_factors", (1.0, 2.0, 4.0))))
    write_report_json(report, out / "report.json")
    write_samples_csv(report["cases"], out / "samples.csv")
    return {"max": report["max"], "median": report["median"], "min": report["min"]}


def _cmd_weights_check(cfg, out: Path, seed):
    geom = _problem(cfg).geometry
    grid = _grid(cfg, geom)
    ws = _weights(cfg, geom)
    rep = verify_ordering(ws, grid)
    export_weights_csv(ws, grid, out / "weights.csv")
    summary = {"passed": rep.passed, "margin_plus": rep.margin_plus, "margin_minus": rep.margin_minus,
               "interface_rel_gap": rep.interface_rel_gap, "psi_star_max": rep.psi_star_max,
               "violation_counts": {k: len(v) for k, v in rep.violations.items()}}
    _json(out / "ordering.json", summary)
    if not rep.passed:
        raise PropertyFailure(str(rep))
    return summary


DISPATCH = {
    "forward": _cmd_forward,
    "control": _cmd_control,
    "trajectory": _cmd_trajectory,
    "observability": _cmd_observability,
    "sweep": _cmd_sweep,
    "weights-check": _cmd_weights_check,
}


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out: Path, command: str, cfg: dict, seed, status: int, started: float) -> None:
    files = {p.name: _sha256(p) for p in sorted(out.iterdir())
             if p.is_file() and p.name != "manifest.json"}
    combined = hashlib.sha256("".join(f"{k}:{v}\n" for k, v in files.items()).encode()).hexdigest()
    _json(out / "manifest.json", {"command": command, "config": cfg, "seed": seed, "exit_status": status,
                                  "files": files, "content_hash": combined, "version": __version__,
                                  "wall_time_s": round(time.perf_counter() - started, 3)})


def run(command: str, config_path, out_dir, seed: int | None = None) -> int:
    """Execute one command; returns the exit status and writes artifacts into ``out_dir``."""
    started = time.perf_counter()
    out = Path(out_dir)
    cfg = {}
    try:
        if command not in DISPATCH:
            raise ConfigError(f"unknown command {command!r}; expected one of {COMMANDS}")
        cfg = load_config(config_path)
        if seed is None and "seed" in cfg:
            seed = cfg["seed"]
        if seed is not None and (isinstance(seed, bool) or int(seed) != seed):
            raise ConfigError(f"seed must be an integer, got {seed!r}")
        seed = None if seed is None else int(seed)
        try:
            out.mkdir(parents=True, exist_ok=True)
            probe = out / ".write_test"
            probe.write_text("")
            probe.unlink()
        except OSError as exc:
            raise ConfigError(f"output directory {out} is not writable: {exc}") from exc
        summary = DISPATCH[command](cfg, out, seed)
        _json(out / "summary.json", summary)
        status = EXIT_OK
    except (ConfigError, WeightError, ValueError, TypeError) as exc:
        print(f"ficon: configuration error: {exc}", file=sys.stderr)
        status = EXIT_CONFIG
    except (PropertyFailure, OptimalityError) as exc:
        print(f"ficon: property check failed: {exc}", file=sys.stderr)
        status = EXIT_PROPERTY
    except (SolverError, ConvergenceError, DivergenceError, SampleError, np.linalg.LinAlgError,
            FloatingPointError, RuntimeError) as exc:
        print(f"ficon: solver failure: {exc}", file=sys.stderr)
        status = EXIT_SOLVER
    except OSError as exc:
        print(f"ficon: I/O error: {exc}", file=sys.stderr)
        status = EXIT_SOLVER
    if out.is_dir():
        _write_manifest(out, command, cfg, seed, status, started)
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ficon", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="RNG seed (overrides the config)")
    args = parser.parse_args(argv)
    return run(args.command, args.config, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
