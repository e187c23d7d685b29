"""Implicit Euler (Rothe) marching for the coupled system and its adjoint.

One step from level k to k + 1 solves a banded system whose rows are

* Dirichlet rows ``z = 0`` at ``a`` and ``b``;
* bulk rows ``rho (z' - z)/h - a D2 z' + b D1 z' + (c + K rho) z' = g_k``,
  coefficients at ``x0 = t_{k+1}``;
* the interface row ``M (z'_0 - z_0)/h + M K z'_0 - (a+ D1+ z' - a- D1- z') = -p_k``,
  with second-order one-sided derivatives.

``z = w exp(-K x0)`` is the shifted unknown; ``g = exp(-K x0) f`` and
``p = exp(-K x0) r``.  The interface row encodes
``a+ dw+/dx1 - a- dw-/dx1 = M dw/dx0 + r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded

from .grid import Grid, SpaceTimeField, second_derivative, spatial_derivative
from .model import ProblemSpec, eval_nonlinearity

__all__ = [
    "SolverError",
    "StepSystem",
    "assemble_step_system",
    "default_K",
    "sample_sources",
    "march",
    "solve_linear_forward",
    "solve_semilinear_forward",
    "solve_adjoint_backward",
    "semilinear_residual",
    "energy_estimate_check",
    "energy_identity",
    "h12_norm",
    "data_norms",
    "dt_threshold",
    "convergence_study",
    "write_solution_csv",
]

BAND = 2  # interface row reaches two nodes on each side


class SolverError(RuntimeError):
    """A time step could not be solved (singular system, divergence, instability)."""


def default_K(spec: ProblemSpec) -> float:
    """Shift making the step operator coercive: ``1 + max|c| + max|b|^2 / (2 alpha)``."""
    bounds = spec.coefficients.sampled_max_abs(spec.geometry)
    return 1.0 + bounds["c"] + bounds["b"] ** 2 / (2.0 * spec.coefficients.alpha)


@dataclass
class LevelCoefficients:
    rho: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    a_plus: float
    a_minus: float


def level_coefficients(spec: ProblemSpec, grid: Grid, t: float, reverse: bool = False) -> LevelCoefficients:
    """Coefficients on the nodes at time ``t`` (``T - t`` when ``reverse``)."""
    if reverse:
        t = grid.geometry.T - t
    x = grid.x_nodes
    i = grid.interface_index
    t_arr = np.full_like(x, t)
    cs = spec.coefficients
    vals = []
    for plus_fn, minus_fn in ((cs.rho_plus, cs.rho_minus), (cs.a_plus, cs.a_minus),
                              (cs.b_plus, cs.b_minus), (cs.c_plus, cs.c_minus)):
        v = np.where(x > 0, plus_fn(t_arr, x), minus_fn(t_arr, x))
        vals.append(v)
    a_plus = float(cs.a_plus(t, 0.0))
    a_minus = float(cs.a_minus(t, 0.0))
    vals[1][i] = 0.5 * (a_plus + a_minus)
    return LevelCoefficients(*vals, a_plus=a_plus, a_minus=a_minus)


@dataclass
class StepSystem:
    """Banded operator of one implicit step plus its coupling to the previous level.

    ``banded`` uses the ``scipy.linalg.solve_banded`` layout with two sub- and
    two super-diagonals.  ``mass`` is the diagonal coefficient of the previous
    level in the right-hand side, already row-scaled.
    """

    banded: np.ndarray
    mass: np.ndarray
    row_scale: np.ndarray
    K: float
    level: int
    dt: float
    interface_index: int

    @property
    def n(self) -> int:
        return self.banded.shape[1]

    def matrix(self) -> sp.csr_matrix:
        n = self.n
        diags = [self.banded[BAND - off, max(off, 0): n + min(off, 0)] for off in range(-BAND, BAND + 1)]
        return sp.diags(diags, list(range(-BAND, BAND + 1)), shape=(n, n), format="csr")

    def rhs(self, z_prev: np.ndarray, bulk_source: np.ndarray, iface_source: float) -> np.ndarray:
        out = self.mass * z_prev + self.row_scale * bulk_source
        out[0] = out[-1] = 0.0
        i = self.interface_index
        out[i] = self.mass[i] * z_prev[i] - self.row_scale[i] * iface_source
        return out

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        try:
            with np.errstate(all="raise"):
                z = solve_banded((BAND, BAND), self.banded, rhs, check_finite=True)
        except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
            A = self.matrix().toarray()
            if not np.all(np.isfinite(A)) or not np.all(np.isfinite(rhs)):
                raise SolverError(f"non-finite step system at level {self.level}") from exc
            raise SolverError(f"singular step system at level {self.level} (cond ~ {np.linalg.cond(A):.2e}); "
                              "reduce dt for the chosen K") from exc
        return z

    def dominance_margins(self) -> np.ndarray:
        A = self.matrix().toarray()
        d = np.abs(np.diag(A))
        off = np.sum(np.abs(A), axis=1) - d
        return d - off


def assemble_step_system(spec: ProblemSpec, grid: Grid, K: float, k: int,
                         extra_c: np.ndarray | None = None, extra_b: np.ndarray | None = None,
                         row_scale: str = "none", M: float | None = None,
                         reverse: bool = False, coeffs: LevelCoefficients | None = None) -> StepSystem:
    """Operator for the step ``k -> k + 1`` (coefficients at ``t_{k+1}``).

    ``extra_c`` / ``extra_b`` are node arrays added to c / b in the bulk rows
    (frozen linearisation terms).  ``row_scale='a'`` divides bulk rows by the
    diffusion coefficient, giving the ``(1/a) L`` form.
    """
    n = grid.n_nodes
    h = grid.dt
    M = spec.M if M is None else M
    t = grid.times[k + 1]
    co = level_coefficients(spec, grid, t, reverse=reverse) if coeffs is None else coeffs
    rho, a, b, c = co.rho, co.a, co.b.copy(), co.c.copy()
    if extra_c is not None:
        c = c + extra_c
    if extra_b is not None:
        b = b + extra_b
    i0 = grid.interface_index
    hm, hp = grid.h_minus, grid.h_plus
    dx = np.where(np.arange(n) < i0, hm, hp)
    ab = np.zeros((2 * BAND + 1, n))
    mass = np.zeros(n)
    scale = np.ones(n)
    if row_scale == "a":
        scale = 1.0 / a
    elif row_scale != "none":
        raise ValueError(f"row_scale must be 'none' or 'a', got {row_scale!r}")

    def put(row, col, val):
        ab[BAND + row - col, col] += val

    put(0, 0, 1.0)
    put(n - 1, n - 1, 1.0)
    idx = np.arange(1, n - 1)
    idx = idx[idx != i0]
    s = scale[idx]
    dxi = dx[idx]
    lower = -(a[idx] / dxi ** 2 + b[idx] / (2 * dxi))
    upper = -(a[idx] / dxi ** 2 - b[idx] / (2 * dxi))
    diag = rho[idx] / h + 2 * a[idx] / dxi ** 2 + c[idx] + K * rho[idx]
    ab[BAND, idx] = s * diag
    ab[BAND + 1, idx - 1] = s * lower
    ab[BAND - 1, idx + 1] = s * upper
    mass[idx] = s * rho[idx] / h
    ap, am = (1.0, 1.0) if spec.raw_flux else (co.a_plus, co.a_minus)
    si = scale[i0] if row_scale == "none" else 1.0
    scale[i0] = si
    put(i0, i0, si * (M / h + M * K + 3 * ap / (2 * hp) + 3 * am / (2 * hm)))
    put(i0, i0 + 1, si * (-4 * ap / (2 * hp)))
    put(i0, i0 + 2, si * (ap / (2 * hp)))
    put(i0, i0 - 1, si * (-4 * am / (2 * hm)))
    put(i0, i0 - 2, si * (am / (2 * hm)))
    mass[i0] = si * M / h
    return StepSystem(ab, mass, scale, float(K), k, h, i0)


def dt_threshold(spec: ProblemSpec, grid: Grid, K: float = 0.0) -> float:
    """Largest dt keeping the interface row strictly diagonally dominant."""
    co = level_coefficients(spec, grid, 0.0)
    ap, am = (1.0, 1.0) if spec.raw_flux else (co.a_plus, co.a_minus)
    excess = ap / grid.h_plus + am / grid.h_minus - spec.M * K
    return math.inf if excess <= 0 else spec.M / excess


def sample_sources(spec: ProblemSpec, grid: Grid, K: float = 0.0, control: np.ndarray | None = None):
    """Per-step bulk sources ``(N, n)`` and interface sources ``(N,)`` at ``t_k``.

    ``control`` is an ``(N + 1, n)`` array whose level k enters step k.
    """
    t = grid.times[:-1]
    X0, X1 = np.meshgrid(t, grid.x_nodes, indexing="ij")
    f = spec.source(X0, X1)
    if control is not None:
        ctrl = control.values if isinstance(control, SpaceTimeField) else np.asarray(control)
        f = f + ctrl[:-1] * grid.control_mask
    shift = np.exp(-K * t)
    r = np.asarray(spec.r(t), dtype=float) * shift
    return f * shift[:, None], r


def march(systems, z0: np.ndarray, bulk_src: np.ndarray, iface_src: np.ndarray) -> np.ndarray:
    """Run the step systems from ``z0``; returns all levels ``(N + 1, n)``."""
    N = len(systems)
    z = np.zeros((N + 1, z0.size))
    z[0] = z0
    for k, S in enumerate(systems):
        z[k + 1] = S.solve(S.rhs(z[k], bulk_src[k], iface_src[k]))
    return z


def _initial_state(spec: ProblemSpec, grid: Grid) -> np.ndarray:
    z0 = np.asarray(spec.w0(grid.x_nodes), dtype=float).copy()
    z0[0] = z0[-1] = 0.0
    return z0


def solve_linear_forward(spec: ProblemSpec, grid: Grid, K: float | None = None,
                         control=None, extra_c=None, extra_b=None) -> SpaceTimeField:
    """Linear forward solve; the nonlinearity (if any) is ignored.

    ``extra_c`` / ``extra_b`` are optional ``(N + 1, n)`` arrays added to the
    zeroth / first order coefficients (level ``k + 1`` used in step ``k``).
    """
    K = default_K(spec) if K is None else float(K)
    systems = [assemble_step_system(spec, grid, K, k,
                                    None if extra_c is None else extra_c[k + 1],
                                    None if extra_b is None else extra_b[k + 1])
               for k in range(grid.n_steps)]
    g, p = sample_sources(spec, grid, K, control)
    z = march(systems, _initial_state(spec, grid), g, p)
    return SpaceTimeField(z * np.exp(K * grid.times)[:, None], grid)


def _central_d1(z: np.ndarray, grid: Grid) -> np.ndarray:
    """Central first difference on every node that carries a bulk row (0 elsewhere)."""
    n = z.size
    i0 = grid.interface_index
    out = np.zeros(n)
    idx = np.arange(1, n - 1)
    idx = idx[idx != i0]
    dx = np.where(idx < i0, grid.h_minus, grid.h_plus)
    out[idx] = (z[idx + 1] - z[idx - 1]) / (2 * dx)
    return out


def _d1_matrix_band(grid: Grid, coef: np.ndarray) -> np.ndarray:
    """Banded layout of ``diag(coef) @ D1`` restricted to bulk rows."""
    n = grid.n_nodes
    i0 = grid.interface_index
    ab = np.zeros((2 * BAND + 1, n))
    idx = np.arange(1, n - 1)
    idx = idx[idx != i0]
    dx = np.where(idx < i0, grid.h_minus, grid.h_plus)
    ab[BAND + 1, idx - 1] = -coef[idx] / (2 * dx)
    ab[BAND - 1, idx + 1] = coef[idx] / (2 * dx)
    return ab


def solve_semilinear_forward(spec: ProblemSpec, grid: Grid, mode: str = "newton", K: float = 0.0,
                             control=None, bulk_extra: np.ndarray | None = None,
                             tol: float = 1e-10, max_iter: int = 25) -> SpaceTimeField:
    """Forward solve including ``g(x, w, dw/dx1)`` in the bulk rows.

    ``mode='semi-implicit'`` lags ``g`` at the previous level; ``mode='newton'``
    solves each implicit step to ``tol`` using the analytic partials.
    ``bulk_extra`` is an optional ``(N, n)`` per-step source added after the shift.
    """
    if mode not in ("newton", "semi-implicit"):
        raise ValueError(f"mode must be 'newton' or 'semi-implicit', got {mode!r}")
    nl = spec.nonlinearity
    K = float(K)
    g_src, p_src = sample_sources(spec, grid, K, control)
    if bulk_extra is not None:
        g_src = g_src + bulk_extra * np.exp(-K * grid.times[:-1])[:, None]
    bulk = grid.bulk_mask
    z = np.zeros((grid.n_steps + 1, grid.n_nodes))
    z[0] = _initial_state(spec, grid)
    x1 = grid.x_nodes
    for k in range(grid.n_steps):
        S = assemble_step_system(spec, grid, K, k)
        rhs = S.rhs(z[k], g_src[k], p_src[k])
        t1 = grid.times[k + 1]
        E1 = math.exp(K * t1)
        if nl is None:
            z[k + 1] = S.solve(rhs)
            continue
        x0 = np.full_like(x1, t1)
        if mode == "semi-implicit":
            E0 = math.exp(K * grid.times[k])
            w_prev = z[k] * E0
            gv, _, _ = eval_nonlinearity(nl, (np.full_like(x1, grid.times[k]), x1), w_prev,
                                         _central_d1(w_prev, grid))
            z[k + 1] = S.solve(rhs - np.where(bulk, gv, 0.0) / E1)
            if not np.all(np.isfinite(z[k + 1])) or np.max(np.abs(z[k + 1] * E1)) > 1e10:
                raise SolverError("nonlinear instability, reduce dt")
            continue
        zk = S.solve(rhs - np.where(bulk, _g_only(nl, x0, x1, z[k] * E1, grid), 0.0) / E1)
        scale = max(1.0, float(np.max(np.abs(rhs))))
        for it in range(max_iter + 1):
            w = zk * E1
            dw = _central_d1(w, grid)
            gv, g1, g2 = eval_nonlinearity(nl, (x0, x1), w, dw)
            A = S.matrix()
            F = A @ zk + np.where(bulk, gv, 0.0) / E1 - rhs
            res = float(np.max(np.abs(F)))
            if res <= tol * scale:
                break
            if it == max_iter:
                raise SolverError(f"Newton did not converge at step {k}: residual {res:.3e}")
            J = S.banded.copy()
            J[BAND] += np.where(bulk, g1, 0.0)
            J += _d1_matrix_band(grid, np.where(bulk, g2, 0.0))
            zk = zk - solve_banded((BAND, BAND), J, F)
        z[k + 1] = zk
    return SpaceTimeField(z * np.exp(K * grid.times)[:, None], grid)


def _g_only(nl, x0, x1, w, grid):
    gv, _, _ = eval_nonlinearity(nl, (x0, x1), w, _central_d1(w, grid))
    return gv


def semilinear_residual(spec: ProblemSpec, grid: Grid, w: SpaceTimeField, control=None,
                        bulk_extra: np.ndarray | None = None) -> float:
    """Max-norm residual of the unshifted discrete system (``K = 0``) for ``w``."""
    g_src, p_src = sample_sources(spec, grid, 0.0, control)
    if bulk_extra is not None:
        g_src = g_src + bulk_extra
    bulk = grid.bulk_mask
    x1 = grid.x_nodes
    worst = 0.0
    vals = w.values
    for k in range(grid.n_steps):
        S = assemble_step_system(spec, grid, 0.0, k)
        rhs = S.rhs(vals[k], g_src[k], p_src[k])
        F = S.matrix() @ vals[k + 1] - rhs
        if spec.nonlinearity is not None:
            x0 = np.full_like(x1, grid.times[k + 1])
            F = F + np.where(bulk, _g_only(spec.nonlinearity, x0, x1, vals[k + 1], grid), 0.0)
        worst = max(worst, float(np.max(np.abs(F))))
    return worst


def solve_adjoint_backward(spec: ProblemSpec, grid: Grid, terminal, sources=(None, None, None),
                           K: float = 0.0) -> SpaceTimeField:
    """Backward system ``-rho dv/dx0 - a d2v/dx1^2 + b dv/dx1 + c v = f`` with ``v(T) = terminal``.

    Interface: ``a+ dv+/dx1 - a- dv-/dx1 + M dv/dx0 = r``.  Solved by reversing
    time (``s = T - x0``) and reusing the forward step assembly.  ``sources``
    is ``(f_plus, f_minus, r)``; each entry a callable, an array or ``None``.
    """
    f_plus, f_minus, r = sources
    T = grid.geometry.T
    terminal = np.asarray(terminal(grid.x_nodes) if callable(terminal) else terminal, dtype=float)
    scale = max(1.0, float(np.max(np.abs(terminal))))
    if abs(terminal[0]) > 1e-12 * scale or abs(terminal[-1]) > 1e-12 * scale:
        raise ValueError("terminal state must vanish at a and b")
    s = grid.times[:-1]
    t_of_s = T - s
    X0, X1 = np.meshgrid(t_of_s, grid.x_nodes, indexing="ij")
    bulk = np.zeros_like(X0)
    for fn, side in ((f_plus, X1 > 0), (f_minus, X1 < 0)):
        if fn is None:
            continue
        if callable(fn):
            vals = fn(X0, X1)
        else:
            vals = np.asarray(fn, dtype=float)[::-1][:-1]
        bulk = bulk + np.where(side, vals, 0.0)
    if r is None:
        rr = np.zeros_like(s)
    elif callable(r):
        rr = np.asarray(r(t_of_s), dtype=float)
    else:
        rr = np.asarray(r, dtype=float)[::-1][:-1]
    shift = np.exp(-K * s)
    systems = [assemble_step_system(spec, grid, K, k, reverse=True) for k in range(grid.n_steps)]
    V = march(systems, terminal, bulk * shift[:, None], rr * shift)
    V = V * np.exp(K * grid.times)[:, None]
    return SpaceTimeField(V[::-1].copy(), grid)


# ---------------------------------------------------------------------------
# Energy estimates
# ---------------------------------------------------------------------------

def h12_norm(w: SpaceTimeField, region: str) -> float:
    """Discrete ``H^{1,2}`` norm on ``Q+`` or ``Q-``: ``w, d0 w, d1 w, d1^2 w`` in L2."""
    grid = w.grid
    wx = grid.region_weights(region)
    wt = grid.time_weights
    v = w.values
    side = "plus" if region == "Q+" else "minus"
    d1 = spatial_derivative(v, grid, side_at_interface=side)
    d2 = second_derivative(v, grid)
    i0 = grid.interface_index
    wx2 = wx.copy()
    wx2[[0, i0, -1]] = 0.0
    wx2[i0 - 1 if region == "Q-" else i0 + 1] = wx[i0 - 1 if region == "Q-" else i0 + 1]
    d0 = np.diff(v, axis=0) / grid.dt
    total = (np.sum(np.outer(wt, wx) * v ** 2) + np.sum(np.outer(wt, wx) * d1 ** 2)
             + np.sum(np.outer(wt, wx2) * d2 ** 2) + np.sum(grid.dt * wx[None, :] * d0 ** 2))
    return math.sqrt(total)


def _h1_line(values: np.ndarray, grid: Grid) -> float:
    d0 = np.diff(values) / grid.dt
    return math.sqrt(float(np.sum(grid.time_weights * values ** 2) + np.sum(grid.dt * d0 ** 2)))


def data_norms(spec: ProblemSpec, grid: Grid) -> dict[str, float]:
    X0, X1 = grid.mesh()
    fp = spec.f_plus(X0, X1)
    fm = spec.f_minus(X0, X1)
    q = np.outer(grid.time_weights, np.ones(grid.n_nodes))
    nf1 = math.sqrt(float(np.sum(q * grid.region_weights("Q+") * fp ** 2)))
    nf2 = math.sqrt(float(np.sum(q * grid.region_weights("Q-") * fm ** 2)))
    w0 = _initial_state(spec, grid)
    dw0 = np.diff(w0) / np.diff(grid.x_nodes)
    nw0 = math.sqrt(float(np.sum(grid.quadrature * w0 ** 2) + np.sum(np.diff(grid.x_nodes) * dw0 ** 2)))
    r = np.asarray(spec.r(grid.times), dtype=float)
    nr = math.sqrt(float(np.sum(grid.time_weights * r ** 2)))
    return {"f_plus": nf1, "f_minus": nf2, "w0_H1": nw0, "r": nr}


def energy_estimate_check(solution: SpaceTimeField, spec: ProblemSpec, grid: Grid | None = None) -> float:
    """Ratio of solution norms to data norms in the shape of the a-priori estimate.

    Numerator: ``|w|_{H^{1,2}(Q+)} + |w|_{H^{1,2}(Q-)} + |w(., 0)|_{H^1(0,T)}``;
    denominator: ``|f+| + |f-| + |w0|_{H^1} + |r|``.  Zero data returns 0.
    """
    grid = solution.grid if grid is None else grid
    num = h12_norm(solution, "Q+") + h12_norm(solution, "Q-") + _h1_line(solution.interface, grid)
    den = sum(data_norms(spec, grid).values())
    if den == 0.0:
        if num > 0.0:
            raise ValueError("nonzero solution for zero data")
        return 0.0
    return num / den


def energy_identity(w: SpaceTimeField, spec: ProblemSpec, K: float | None = None) -> dict[str, float]:
    """Discrete energy balance of the shifted scheme, term by term.

    Multiplying bulk row i of step k by ``h q_i z_i^{k+1}`` (``q`` = trapezoid
    weights) and the interface row by ``h z_0^{k+1}``, then summing over k::

        E_N - E_0 + jumps + variation + sum_k h B(z^{k+1}) = sum_k h <source, z^{k+1}>

    with ``E_k = (sum q rho_k z_k^2 + M z_0^2) / 2``.  ``residual`` is the
    relative mismatch; it vanishes when ``w`` solves the scheme.
    """
    grid = w.grid
    K = default_K(spec) if K is None else float(K)
    z = w.values * np.exp(-K * grid.times)[:, None]
    g, p = sample_sources(spec, grid, K)
    q = grid.quadrature.copy()
    i0 = grid.interface_index
    q[[0, -1]] = 0.0
    q[i0] = 0.0
    h = grid.dt
    energy_end = energy_start = jumps = variation = spatial = source = 0.0
    rho_prev = level_coefficients(spec, grid, 0.0).rho
    for k in range(grid.n_steps):
        S = assemble_step_system(spec, grid, K, k)
        co = level_coefficients(spec, grid, grid.times[k + 1])
        zn, zo = z[k + 1], z[k]
        weights = q.copy()
        weights[i0] = 1.0
        Az = S.matrix() @ zn - S.mass * zn
        spatial += h * float(np.dot(weights, Az * zn))
        jumps += 0.5 * float(np.sum(q * co.rho * (zn - zo) ** 2) + spec.M * (zn[i0] - zo[i0]) ** 2)
        variation += 0.5 * float(np.sum(q * (co.rho - rho_prev) * zo ** 2))
        rho_prev = co.rho
        src = q * g[k]
        source += h * float(np.dot(src, zn)) - h * p[k] * zn[i0]
    rho_T = level_coefficients(spec, grid, grid.times[-1]).rho
    rho_0 = level_coefficients(spec, grid, 0.0).rho
    energy_end = 0.5 * float(np.sum(q * rho_T * z[-1] ** 2) + spec.M * z[-1, i0] ** 2)
    energy_start = 0.5 * float(np.sum(q * rho_0 * z[0] ** 2) + spec.M * z[0, i0] ** 2)
    lhs = energy_end - energy_start + jumps - variation + spatial
    scale = abs(energy_end) + abs(energy_start) + abs(jumps) + abs(spatial) + abs(source) + 1e-300
    return {"energy_end": energy_end, "energy_start": energy_start, "jumps": jumps,
            "variation": variation, "spatial": spatial, "source": source,
            "residual": abs(lhs - source) / scale}


# ---------------------------------------------------------------------------
# Convergence studies and export
# ---------------------------------------------------------------------------

def _restrict(fine: SpaceTimeField, coarse: Grid) -> np.ndarray:
    """Sample a field on the nodes and levels of a nested coarser grid."""
    g = fine.grid
    idx = np.searchsorted(g.x_nodes, coarse.x_nodes - 1e-12 * g.geometry.length)
    if not np.allclose(g.x_nodes[idx], coarse.x_nodes, rtol=0, atol=1e-12 * g.geometry.length):
        raise ValueError("grids are not nested in space")
    step, rem = divmod(g.n_steps, coarse.n_steps)
    if rem:
        raise ValueError("grids are not nested in time")
    return fine.values[::step][:, idx]


def convergence_study(spec: ProblemSpec, grids, exact=None, K: float | None = None) -> dict:
    """Errors and observed orders of the linear forward solver along a refinement path.

    With ``exact(x0, x1)`` the errors are max-norm distances to it.  Without,
    they are max-norm differences between successive solutions on the coarser
    grid (self-convergence), one fewer than the number of grids.  Orders are
    ``log2`` ratios of successive errors; ``grids`` must refine by 2 along the
    axis being studied.
    """
    sols = [solve_linear_forward(spec, g, K=K) for g in grids]
    if exact is not None:
        errs = []
        for s in sols:
            X0, X1 = s.grid.mesh()
            errs.append(float(np.max(np.abs(s.values - exact(X0, X1)))))
    else:
        errs = [float(np.max(np.abs(c.values - _restrict(f, c.grid)))) for c, f in zip(sols, sols[1:])]
    orders = [math.log2(e0 / e1) if e1 > 0 else math.inf for e0, e1 in zip(errs, errs[1:])]
    return {"errors": errs, "orders": orders}


def write_solution_csv(w: SpaceTimeField, path) -> None:
    """Long-format dump with header ``x0,x1,value``."""
    X0, X1 = w.grid.mesh()
    with open(path, "w", newline="") as fh:
        fh.write("x0,x1,value\n")
        for t, x, v in zip(X0.ravel(), X1.ravel(), w.values.ravel()):
            fh.write(f"{float(t)!r},{float(x)!r},{float(v)!r}\n")
