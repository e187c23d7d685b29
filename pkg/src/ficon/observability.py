"""Numerical stress test of the weighted observability inequality.

For a backward adjoint solution ``v`` with data ``(f_plus, f_minus, r, v(T))``
the inequality bounds

    LHS = sum of (T - x0)^(-p) e^psi |d^alpha v| norms on Q-, Q+ and x1 = 0

by

    RHS = (T - x0)^-3 e^psi f_plus on Q+  +  e^psi f_minus on Q-
          + (T - x0)^-1.5 e^psi r on x1 = 0  +  (T - x0)^-7.5 e^psi v on Q_omega.

Every term is computed as ``log`` of a trapezoidal L2 norm by a log-sum-exp
so that neither the blow-up of ``(T - x0)^-p`` nor the decay of ``e^psi``
overflows.  The end level ``x0 = T`` carries zero weight (``psi -> -inf``).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .forward import solve_adjoint_backward
from .grid import Grid, SpaceTimeField, spatial_derivative
from .model import ConfigError, ProblemSpec
from .weights import WeightSystem, build_weight_system

__all__ = [
    "ObservabilityCase",
    "ObservabilityData",
    "SampleError",
    "LHS_TERMS",
    "RHS_TERMS",
    "observability_ratio",
    "random_data",
    "ensemble_constant",
    "refinement_drift",
    "find_s_hat_threshold",
    "write_report_json",
    "write_samples_csv",
]

# name -> (power of (T - x0), region, quantity)
LHS_TERMS = {
    "minus_v": (4.5, "Q-", "v"),
    "minus_dx_v": (1.5, "Q-", "dx_minus"),
    "plus_v": (7.5, "Q+", "v"),
    "plus_dx_v": (4.5, "Q+", "dx_plus"),
    "iface_dx_plus": (4.5, "interface", "dx_plus"),
    "iface_dx_minus": (1.5, "interface", "dx_minus"),
    "iface_dt_v": (1.5, "interface", "dt"),
    "iface_v": (7.5, "interface", "v"),
}
RHS_TERMS = {
    "f_plus": (3.0, "Q+", "f_plus"),
    "f_minus": (0.0, "Q-", "f_minus"),
    "r": (1.5, "interface", "r"),
    "observation": (7.5, "omega", "v"),
}


class SampleError(RuntimeError):
    """One or more ensemble samples failed; ``indices`` lists them."""

    def __init__(self, message, indices):
        super().__init__(message)
        self.indices = list(indices)


@dataclass
class ObservabilityData:
    """Adjoint data on the grid: bulk sources ``(N + 1, n)``, interface source ``(N + 1,)``, terminal ``(n,)``."""

    f_plus: np.ndarray
    f_minus: np.ndarray
    r: np.ndarray
    terminal: np.ndarray

    def scaled(self, factor: float) -> "ObservabilityData":
        return ObservabilityData(self.f_plus * factor, self.f_minus * factor, self.r * factor,
                                 self.terminal * factor)

    def is_zero(self) -> bool:
        return not (np.any(self.f_plus) or np.any(self.f_minus) or np.any(self.r) or np.any(self.terminal))


@dataclass
class ObservabilityCase:
    v: SpaceTimeField
    data: ObservabilityData
    ws: WeightSystem
    lhs_terms: dict
    rhs_terms: dict
    log_lhs: float
    log_rhs: float
    log_terms: dict = field(default_factory=dict, repr=False)

    @property
    def lhs(self) -> float:
        return sum(self.lhs_terms.values())

    @property
    def rhs(self) -> float:
        return sum(self.rhs_terms.values())

    @property
    def ratio(self) -> float:
        return math.exp(self.log_lhs - self.log_rhs)


def _as_data(data, grid: Grid) -> ObservabilityData:
    if isinstance(data, ObservabilityData):
        out = data
    else:
        f_plus, f_minus, r, terminal = data
        shape = (grid.n_steps + 1, grid.n_nodes)
        X0, X1 = grid.mesh()

        def field_of(f):
            if f is None:
                return np.zeros(shape)
            if callable(f):
                return np.asarray(f(X0, X1), dtype=float) * np.ones(shape)
            return np.broadcast_to(np.asarray(f, dtype=float), shape).copy()

        rr = np.zeros(grid.n_steps + 1) if r is None else (
            np.asarray(r(grid.times), dtype=float) * np.ones(grid.n_steps + 1) if callable(r)
            else np.asarray(r, dtype=float))
        term = np.asarray(terminal(grid.x_nodes) if callable(terminal) else terminal, dtype=float)
        out = ObservabilityData(field_of(f_plus), field_of(f_minus), rr, term)
    plus = np.arange(grid.n_nodes) > grid.interface_index
    minus = np.arange(grid.n_nodes) < grid.interface_index
    return ObservabilityData(np.where(plus, out.f_plus, 0.0), np.where(minus, out.f_minus, 0.0),
                             np.asarray(out.r, dtype=float), np.asarray(out.terminal, dtype=float))


def _log_psi(ws: WeightSystem, grid: Grid) -> np.ndarray:
    X0, X1 = grid.mesh()
    with np.errstate(divide="ignore", invalid="ignore"):
        psi = ws.psi_star(X0, X1)
    psi[-1] = -np.inf
    return psi


def _log_norm(values: np.ndarray, log_weight: np.ndarray, quad: np.ndarray) -> float:
    """``log sqrt(sum quad * exp(2 log_weight) * values^2)`` over entries with positive quadrature."""
    with np.errstate(divide="ignore"):
        terms = 2 * log_weight + np.log(quad) + 2 * np.log(np.abs(values))
    terms = terms[np.isfinite(terms)]
    if terms.size == 0:
        return -math.inf
    return 0.5 * float(logsumexp(terms))


def observability_ratio(spec: ProblemSpec, grid: Grid, ws: WeightSystem, data) -> ObservabilityCase:
    """Solve the backward adjoint system for ``data`` and evaluate every weighted term.

    ``data`` is an ObservabilityData or a tuple ``(f_plus, f_minus, r, terminal)``
    of callables, arrays or ``None``.
    """
    d = _as_data(data, grid)
    if d.is_zero():
        raise ConfigError("vacuous case: all observability data are zero")
    v = solve_adjoint_backward(spec, grid, d.terminal, sources=(d.f_plus, d.f_minus, d.r), K=0.0)
    T = grid.geometry.T
    psi = _log_psi(ws, grid)
    with np.errstate(divide="ignore"):
        log_tau = np.log(np.maximum(T - grid.times, 0.0))
    i = grid.interface_index
    V = v.values
    quantities = {
        "v": V,
        "dx_plus": spatial_derivative(V, grid, "plus"),
        "dx_minus": spatial_derivative(V, grid, "minus"),
        "f_plus": d.f_plus,
        "f_minus": d.f_minus,
    }
    dt_v = np.zeros(grid.n_steps + 1)
    dt_v[1:] = np.diff(V[:, i]) / grid.dt
    line = {"v": V[:, i], "dx_plus": quantities["dx_plus"][:, i], "dx_minus": quantities["dx_minus"][:, i],
            "dt": dt_v, "r": d.r}
    tw = grid.time_weights

    def term(power, region, qty):
        if region == "interface":
            with np.errstate(invalid="ignore"):
                lw = np.where(np.isfinite(psi[:, i]), -power * log_tau + psi[:, i], -np.inf)
            return _log_norm(line[qty], lw, tw)
        with np.errstate(invalid="ignore"):
            lw = np.where(np.isfinite(psi), -power * log_tau[:, None] + psi, -np.inf)
        quad = np.outer(tw, grid.region_weights(region))
        return _log_norm(quantities[qty], lw, quad)

    logs = {name: term(*spec_) for name, spec_ in {**LHS_TERMS, **RHS_TERMS}.items()}
    log_lhs = float(logsumexp([logs[k] for k in LHS_TERMS]))
    log_rhs = float(logsumexp([logs[k] for k in RHS_TERMS]))
    if not math.isfinite(log_rhs):
        raise ConfigError("vacuous case: every right-hand term vanishes")
    lhs = {k: math.exp(logs[k]) for k in LHS_TERMS}
    rhs = {k: math.exp(logs[k]) for k in RHS_TERMS}
    return ObservabilityCase(v, d, ws, lhs, rhs, log_lhs, log_rhs, logs)


def random_data(grid: Grid, rng: np.random.Generator, n_modes: int = 5, n_pulses: int = 2) -> ObservabilityData:
    """Terminal state from the first ``n_modes`` sines, interface source from Gaussian pulses, no bulk source."""
    geom = grid.geometry
    x = grid.x_nodes
    coeffs = rng.standard_normal(n_modes) / np.arange(1, n_modes + 1)
    k = np.arange(1, n_modes + 1)[:, None]
    terminal = coeffs @ np.sin(k * math.pi * (x - geom.a) / geom.length)
    terminal[0] = terminal[-1] = 0.0
    t = grid.times
    r = np.zeros_like(t)
    for _ in range(n_pulses):
        amp = rng.standard_normal()
        center = rng.uniform(0.1, 0.9) * geom.T
        width = rng.uniform(0.05, 0.15) * geom.T
        r += amp * np.exp(-0.5 * ((t - center) / width) ** 2)
    zero = np.zeros((grid.n_steps + 1, grid.n_nodes))
    return ObservabilityData(zero, zero.copy(), r, terminal)


def _ensemble_ratios(spec, grid, ws, n_samples, seed):
    rng = np.random.default_rng(seed)
    data = [random_data(grid, rng) for _ in range(n_samples)]
    cases, failed = [], []
    for idx, d in enumerate(data):
        try:
            cases.append(observability_ratio(spec, grid, ws, d))
        except Exception as exc:  # noqa: BLE001 - aggregated and re-raised with indices
            failed.append((idx, exc))
    if failed:
        idx = [i for i, _ in failed]
        raise SampleError(f"samples {idx} failed: {failed[0][1]}", idx)
    return cases


def ensemble_constant(spec: ProblemSpec, grid: Grid, ws: WeightSystem, n_samples: int = 20,
                      seed: int = 0, s_hat_factors=(1.0, 2.0, 4.0)) -> dict:
    """Ratio statistics over ``n_samples`` random adjoint solutions, plus their max over an s_hat sweep.

    The same seed draws the same data for every sweep entry.  The returned
    report is JSON-serialisable; ``cases`` is attached for the per-sample CSV.
    """
    if int(n_samples) != n_samples or n_samples < 10:
        raise ConfigError(f"n_samples must be an integer >= 10, got {n_samples}")
    n_samples = int(n_samples)
    cases = _ensemble_ratios(spec, grid, ws, n_samples, seed)
    ratios = [c.ratio for c in cases]
    s0 = ws.params.s_hat
    sweep = {}
    for fct in s_hat_factors:
        s = s0 * fct
        ws_s = ws if fct == 1.0 else build_weight_system(ws.geometry, replace(ws.params, s_hat=s))
        rs = ratios if fct == 1.0 else [c.ratio for c in _ensemble_ratios(spec, grid, ws_s, n_samples, seed)]
        sweep[repr(float(s))] = max(rs)
    return {
        "samples": n_samples,
        "seed": int(seed),
        "s_hat": float(s0),
        "grid": [grid.n_minus, grid.n_plus, grid.n_steps],
        "ratios": ratios,
        "max": max(ratios),
        "median": float(np.median(ratios)),
        "min": min(ratios),
        "s_hat_sweep": sweep,
        "cases": cases,
    }


def refinement_drift(spec: ProblemSpec, grid: Grid, ws: WeightSystem, n_samples: int = 20, seed: int = 0) -> dict:
    """Max ensemble ratio on ``grid`` and on its 2x refinement; drift is the larger-over-smaller factor."""
    coarse = max(c.ratio for c in _ensemble_ratios(spec, grid, ws, n_samples, seed))
    fine = max(c.ratio for c in _ensemble_ratios(spec, grid.refined(2), ws, n_samples, seed))
    return {"coarse": coarse, "fine": fine, "drift": max(coarse, fine) / min(coarse, fine)}


def find_s_hat_threshold(spec: ProblemSpec, grid: Grid, ws: WeightSystem, ladder,
                         n_samples: int = 20, seed: int = 0, max_drift: float = 2.0) -> dict:
    """Smallest ``s_hat`` in ``ladder`` whose max ratio drifts at most ``max_drift`` under refinement.

    Returns ``{"threshold": value or None, "ladder": [{s_hat, coarse, fine, drift}, ...]}``.
    """
    rows = []
    threshold = None
    for s in sorted(float(v) for v in ladder):
        ws_s = build_weight_system(ws.geometry, replace(ws.params, s_hat=s))
        row = {"s_hat": s, **refinement_drift(spec, grid, ws_s, n_samples, seed)}
        rows.append(row)
        if row["drift"] <= max_drift:
            threshold = s
            break
    return {"threshold": threshold, "ladder": rows}


def write_report_json(report: dict, path) -> None:
    clean = {k: v for k, v in report.items() if k != "cases"}
    with open(path, "w") as fh:
        json.dump(clean, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_samples_csv(cases, path) -> None:
    cols = list(LHS_TERMS) + list(RHS_TERMS)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", *cols, "lhs", "rhs", "ratio"])
        for idx, c in enumerate(cases):
            vals = {**c.lhs_terms, **c.rhs_terms}
            w.writerow([idx, *(repr(float(vals[k])) for k in cols), repr(float(c.lhs)),
                        repr(float(c.rhs)), repr(float(c.ratio))])
