"""Local controllability to a (possibly non-stationary) trajectory by Picard iteration.

The target ``w_bar`` solves the semilinear system with a control ``u_bar``
supported in omega.  The perturbation ``y = w - w_bar`` obeys

    (L + dg/dxi1 + dg/dxi2 d/dx1) y = chi (a u) - rem(y)

with ``rem(y) = g(w_bar + y) - g(w_bar) - dg/dxi1 y - dg/dxi2 dy/dx1``.  Each
iterate solves the penalised control problem for the linearised operator with
the remainder of the previous iterate as a source, then re-simulates the
semilinear system with the combined control.  All solves use the unshifted
scheme (``K = 0``) so that target, iterates and re-simulation share one
discretisation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .forward import (_central_d1, level_coefficients, semilinear_residual, solve_linear_forward,
                      solve_semilinear_forward)
from .grid import Grid, SpaceTimeField, discrete_norm
from .hum import ControlProblem, ControlSolution, solve_penalized_control
from .model import ConfigError, Nonlinearity, ProblemSpec, eval_nonlinearity
from .weights import WeightSystem

__all__ = [
    "TargetTrajectory",
    "PicardState",
    "TrajectoryResult",
    "DivergenceError",
    "bump_control",
    "make_target_trajectory",
    "linearized_coefficients",
    "nonlinear_remainder",
    "solve_trajectory_control",
    "write_history_csv",
    "HISTORY_COLUMNS",
]

HISTORY_COLUMNS = ("iterate", "terminal_error", "remainder_norm", "inner_cg_iters")


class DivergenceError(RuntimeError):
    """The Picard loop moved away from the target for three consecutive iterates."""


@dataclass
class TargetTrajectory:
    w_bar: SpaceTimeField
    u_bar: SpaceTimeField
    spec: ProblemSpec
    residual: float

    @property
    def terminal(self) -> np.ndarray:
        return self.w_bar.terminal


@dataclass
class PicardState:
    iterate: int
    y: SpaceTimeField
    u: SpaceTimeField
    terminal_error: list
    extra_c: np.ndarray | None
    extra_b: np.ndarray | None


@dataclass
class TrajectoryResult:
    control: SpaceTimeField
    state: SpaceTimeField
    history: list
    iterations: int
    inner: ControlSolution | None = field(default=None, repr=False)
    picard: PicardState | None = field(default=None, repr=False)

    def __iter__(self):
        return iter((self.control, self.state, self.history))


def _control_field(u_profile, grid: Grid) -> np.ndarray:
    if u_profile is None:
        return np.zeros((grid.n_steps + 1, grid.n_nodes))
    if isinstance(u_profile, SpaceTimeField):
        vals = u_profile.values.copy()
    elif callable(u_profile):
        X0, X1 = grid.mesh()
        vals = np.asarray(u_profile(X0, X1), dtype=float) * np.ones_like(X0)
    else:
        vals = np.asarray(u_profile, dtype=float).copy()
        if vals.shape != (grid.n_steps + 1, grid.n_nodes):
            raise ConfigError(f"control array shape {vals.shape} does not match the grid")
    off = ~grid.control_mask
    if np.any(vals[:, off] != 0.0):
        raise ConfigError("control profile is not supported in omega (nonzero off the control mask)")
    return vals


def bump_control(grid: Grid, amp: float = 1.0, freq: float = 2.0):
    """Smooth time-varying bump on omega vanishing at its ends."""
    d, b = grid.d, grid.geometry.b

    def u(x0, x1):
        inside = (x1 >= d) & (x1 <= b)
        s = np.where(inside, np.sin(math.pi * (x1 - d) / (b - d)) ** 2, 0.0)
        return amp * s * np.cos(freq * math.pi * x0 / grid.geometry.T)

    return u


def make_target_trajectory(spec: ProblemSpec, grid: Grid, u_profile=None, w0_target=None) -> TargetTrajectory:
    """Forward-solve the semilinear system under ``u_profile`` from ``w0_target``.

    ``u_profile`` is a callable ``(x0, x1)``, an ``(N + 1, n)`` array or a
    SpaceTimeField; it must vanish off omega.  ``w0_target`` defaults to ``spec.w0``.
    """
    ctrl = _control_field(u_profile, grid)
    if w0_target is not None:
        spec = replace(spec, w0=w0_target if callable(w0_target) else _array_state(w0_target, grid))
    if spec.nonlinearity is None:
        w_bar = solve_linear_forward(spec, grid, K=0.0, control=ctrl)
    else:
        w_bar = solve_semilinear_forward(spec, grid, mode="newton", K=0.0, control=ctrl)
    res = semilinear_residual(spec, grid, w_bar, control=ctrl)
    return TargetTrajectory(w_bar, SpaceTimeField(ctrl, grid), spec, res)


def _array_state(values, grid: Grid):
    vals = np.asarray(values, dtype=float)
    x = grid.x_nodes

    def w0(x1):
        return np.interp(x1, x, vals)

    return w0


def _bulk_derivative(values: np.ndarray, grid: Grid) -> np.ndarray:
    return np.array([_central_d1(row, grid) for row in values])


def linearized_coefficients(traj: TargetTrajectory, n: Nonlinearity | None = None):
    """``(dg/dxi1, dg/dxi2)`` at ``(x, w_bar, dw_bar/dx1)`` on every node and level.

    The first is added to ``c`` and the second to ``b``.  Derivatives use the
    central differences of the bulk rows.
    """
    n = traj.spec.nonlinearity if n is None else n
    grid = traj.w_bar.grid
    if n is None:
        zero = np.zeros_like(traj.w_bar.values)
        return zero, zero.copy()
    X0, X1 = grid.mesh()
    w = traj.w_bar.values
    _, g1, g2 = eval_nonlinearity(n, (X0, X1), w, _bulk_derivative(w, grid))
    return np.asarray(g1, dtype=float), np.asarray(g2, dtype=float)


def nonlinear_remainder(traj: TargetTrajectory, y: np.ndarray, n: Nonlinearity | None = None) -> np.ndarray:
    """``g(w_bar + y) - g(w_bar) - dg/dxi1 y - dg/dxi2 dy/dx1`` on bulk nodes, all levels."""
    n = traj.spec.nonlinearity if n is None else n
    grid = traj.w_bar.grid
    if n is None:
        return np.zeros_like(y)
    X0, X1 = grid.mesh()
    w = traj.w_bar.values
    dw = _bulk_derivative(w, grid)
    dy = _bulk_derivative(y, grid)
    g0, g1, g2 = eval_nonlinearity(n, (X0, X1), w, dw)
    gy, _, _ = eval_nonlinearity(n, (X0, X1), w + y, dw + dy)
    return np.where(grid.bulk_mask, gy - g0 - g1 * y - g2 * dy, 0.0)


def _terminal_error(diff: np.ndarray, grid: Grid, metric: str) -> float:
    l2 = float(np.sum(grid.quadrature * diff ** 2))
    if metric == "L2":
        return math.sqrt(l2)
    d = np.diff(diff) / np.diff(grid.x_nodes)
    return math.sqrt(l2 + float(np.sum(np.diff(grid.x_nodes) * d ** 2)))


def solve_trajectory_control(spec: ProblemSpec, grid: Grid, ws: WeightSystem, traj: TargetTrajectory,
                             w0, epsilon: float = 1e-8, max_iters: int = 8, tol: float = 1e-4,
                             metric: str = "L2", **control_options) -> TrajectoryResult:
    """Drive ``w(T)`` to ``w_bar(T)`` starting from ``w0``.

    Returns the combined control ``u_bar + a u`` in the original scaling, the
    re-simulated semilinear state and a per-iterate history.  Stops when the
    terminal error is at most ``tol``, when the nonlinear remainder vanishes
    identically (the linear case), or after ``max_iters`` iterates.
    """
    if metric not in ("L2", "H1"):
        raise ConfigError(f"metric must be 'L2' or 'H1', got {metric!r}")
    if max_iters < 1:
        raise ConfigError("max_iters must be at least 1")
    nl = spec.nonlinearity
    w0_vals = np.asarray(w0(grid.x_nodes) if callable(w0) else w0, dtype=float).copy()
    z0 = w0_vals - traj.w_bar.values[0]
    z0[0] = z0[-1] = 0.0
    extra_c, extra_b = linearized_coefficients(traj, nl)
    zero = lambda x0, x1: np.zeros(np.broadcast(x0, x1).shape)  # noqa: E731
    lin_spec = replace(spec, nonlinearity=None, f_plus=zero, f_minus=zero,
                       r=lambda x0: np.zeros(np.shape(x0)), w0=lambda x1: np.zeros(np.shape(x1)))
    a_levels = np.array([level_coefficients(spec, grid, t).a for t in grid.times])
    sim_spec = replace(spec, w0=_array_state(w0_vals, grid))
    y = np.zeros_like(traj.w_bar.values)
    history, errors = [], []
    inner = None
    control = traj.u_bar
    state = traj.w_bar
    grows = 0
    for it in range(1, max_iters + 1):
        rem = nonlinear_remainder(traj, y, nl)
        rem_norm = discrete_norm(SpaceTimeField(rem, grid))
        source = None if not np.any(rem) else -(rem / a_levels)[1:]
        cp = ControlProblem(lin_spec, grid, ws, epsilon,
                            extra_c=extra_c if nl is not None else None,
                            extra_b=extra_b if nl is not None else None,
                            extra_source=source, z0=z0, **control_options)
        inner = solve_penalized_control(cp)
        y = inner.z.values
        control = SpaceTimeField(traj.u_bar.values + a_levels * inner.u.values, grid)
        if nl is None:
            state = solve_linear_forward(sim_spec, grid, K=0.0, control=control.values)
        else:
            state = solve_semilinear_forward(sim_spec, grid, mode="newton", K=0.0, control=control.values)
        err = _terminal_error(state.terminal - traj.terminal, grid, metric)
        history.append({"iterate": it, "terminal_error": err, "remainder_norm": rem_norm,
                        "inner_cg_iters": inner.cg_iterations})
        if errors and err > errors[-1]:
            grows += 1
        else:
            grows = 0
        errors.append(err)
        if grows >= 3:
            raise DivergenceError(f"terminal error grew for 3 consecutive iterates ({errors[-4:]}); "
                                  "reduce the initial perturbation")
        if err <= tol:
            break
        if not np.any(nonlinear_remainder(traj, y, nl)):
            break
    picard = PicardState(len(history), SpaceTimeField(y, grid), inner.u, errors,
                         extra_c if nl is not None else None, extra_b if nl is not None else None)
    return TrajectoryResult(control, state, history, len(history), inner, picard)


def write_history_csv(history, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for row in history:
            w.writerow([row["iterate"], repr(float(row["terminal_error"])),
                        repr(float(row["remainder_norm"])), row["inner_cg_iters"]])
