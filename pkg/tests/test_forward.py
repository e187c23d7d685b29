import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ficon.forward import (SolverError, assemble_step_system, convergence_study, default_K, dt_threshold,
                           energy_estimate_check, energy_identity, semilinear_residual,
                           solve_adjoint_backward, solve_linear_forward, solve_semilinear_forward,
                           write_solution_csv)
from ficon.grid import build_grid
from ficon.model import (CoefficientSet, Geometry, Nonlinearity, ProblemSpec, _const, burgers,
                         default_problem, sine_initial_state)

from .conftest import DESK, random_smooth_problem

# manufactured solution exp(-x0) phi(x1), continuous at 0 with distinct one-sided slopes
A_PLUS, A_MINUS, RHO, B, C = 2.0, 0.5, 1.5, 0.3, 0.7


def phi(x):
    return np.where(x < 0, (x + 1) * np.cos(x), (1 - x) * (1 + 2 * x))


def dphi(x):
    return np.where(x < 0, np.cos(x) - (x + 1) * np.sin(x), 1 - 4 * x)


def d2phi(x):
    return np.where(x < 0, -2 * np.sin(x) - (x + 1) * np.cos(x), -4.0 + 0 * x)


def exact(t, x):
    return np.exp(-t) * phi(x)


def mms_spec(M=1.0, nonlinearity=None):
    a_of = lambda x: np.where(x < 0, A_MINUS, A_PLUS)  # noqa: E731

    def f(t, x):
        w, dw = exact(t, x), np.exp(-t) * dphi(x)
        out = np.exp(-t) * (-RHO * phi(x) - a_of(x) * d2phi(x) + B * dphi(x) + C * phi(x))
        if nonlinearity is not None:
            out = out + nonlinearity.g(t, x, w, dw)
        return out

    # interface: a+ w'(0+) - a- w'(0-) = M dw/dx0 + r, with phi(0) = phi'(0+) = phi'(0-) = 1
    r = lambda t: np.exp(-t) * (A_PLUS - A_MINUS + M)  # noqa: E731
    cs = CoefficientSet(_const(RHO), _const(A_PLUS), _const(B), _const(C),
                        _const(RHO), _const(A_MINUS), _const(B), _const(C), 0.5)
    return ProblemSpec(DESK, cs, M, nonlinearity=nonlinearity, f_plus=f, f_minus=f, r=r, w0=phi)


def test_bulk_rows_are_the_implicit_heat_stencil(spec):
    g = build_grid(DESK, 10, 10, 20)
    A = assemble_step_system(spec, g, 0.0, 0).matrix().toarray() * g.dt
    mu = g.dt / g.h_plus ** 2
    i = g.interface_index + 3
    np.testing.assert_allclose(A[i, i - 1:i + 2], [-mu, 1 + 2 * mu, -mu], rtol=1e-14)


def test_zero_mass_interface_row_is_flux_balance(spec):
    g = build_grid(DESK, 10, 10, 20)
    S = assemble_step_system(spec, g, 0.0, 0, M=0.0)
    x = g.x_nodes
    z = np.where(x < 0, 1 + 3 * x, 1 - 2 * x)
    i = g.interface_index
    flux = (S.matrix() @ z)[i]
    # row reads -(a+ dz+ - a- dz-) for M = 0
    assert flux == pytest.approx(-(1.0 * -2.0 - 1.0 * 3.0), abs=1e-12)
    assert S.mass[i] == 0.0


def test_dominance_margin_positive():
    g = build_grid(DESK, 20, 20, 1000)
    S = assemble_step_system(default_problem(), g, 1.0, 0)
    assert g.h_plus == pytest.approx(0.05) and g.dt == pytest.approx(0.001)
    assert np.all(S.dominance_margins() > 0)


@pytest.mark.parametrize("K", [0.0, 1.0, 5.0])
def test_dt_threshold_separates_dominant_steps(spec, K):
    # the interface row is dominant iff M / dt + M K > a+ / h+ + a- / h-
    base = build_grid(DESK, 10, 10, 20)
    th = dt_threshold(spec, base, K)
    assert th == pytest.approx(1.0 / (1 / base.h_plus + 1 / base.h_minus - K))
    i = base.interface_index
    below = build_grid(DESK, 10, 10, math.ceil(DESK.T / th) + 1)
    above = build_grid(DESK, 10, 10, math.floor(DESK.T / th) - 1)
    assert assemble_step_system(spec, below, K, 0).dominance_margins()[i] > 0
    assert assemble_step_system(spec, above, K, 0).dominance_margins()[i] < 0


def test_no_threshold_when_mass_shift_dominates(spec):
    assert dt_threshold(spec, build_grid(DESK, 4, 4, 4), 1e3) == math.inf


def test_default_shift(spec):
    assert default_K(spec) == 1.0


def test_zero_data_gives_zero(spec, small_grid):
    assert not np.any(solve_linear_forward(spec, small_grid).values)
    assert not np.any(solve_semilinear_forward(default_problem(nonlinearity=burgers()), small_grid).values)
    assert not np.any(solve_adjoint_backward(spec, small_grid, np.zeros(small_grid.n_nodes)).values)
    assert energy_estimate_check(solve_linear_forward(spec, small_grid), spec) == 0.0


def test_manufactured_solution_orders():
    spec = mms_spec()
    space = convergence_study(spec, [build_grid(DESK, n, n, n * n // 8) for n in (8, 16, 32)], exact)
    time = convergence_study(spec, [build_grid(DESK, 256, 256, N) for N in (8, 16, 32)], exact)
    assert min(space["orders"]) >= 1.9
    assert min(time["orders"]) >= 0.9


def test_self_convergence_orders():
    spec = mms_spec()
    space = convergence_study(spec, [build_grid(DESK, n, n, 64) for n in (8, 16, 32, 64)])
    time = convergence_study(spec, [build_grid(DESK, 64, 64, N) for N in (16, 32, 64, 128)])
    assert min(space["orders"]) >= 1.9
    assert min(time["orders"]) >= 0.9


def test_shifted_scheme_converges_to_the_same_solution():
    spec = mms_spec()
    study = convergence_study(spec, [build_grid(DESK, 256, 256, N) for N in (8, 16, 32)], exact,
                              K=default_K(spec))
    assert min(study["orders"]) >= 0.9


def test_energy_identity_closes(sine_spec, desk_grid):
    w = solve_linear_forward(sine_spec, desk_grid)
    assert energy_identity(w, sine_spec)["residual"] < 1e-12


def test_linear_nonlinearity_matches_linear_solver(sine_spec, desk_grid):
    zero = Nonlinearity(g=lambda x0, x1, a, b: 0.0 * a, dg_dxi1=lambda x0, x1, a, b: 0.0 * a,
                        dg_dxi2=lambda x0, x1, a, b: 0.0 * a, name="zero")
    from dataclasses import replace

    s = replace(sine_spec, nonlinearity=zero)
    lin = solve_linear_forward(sine_spec, desk_grid, K=0.0).values
    for mode in ("newton", "semi-implicit"):
        np.testing.assert_allclose(solve_semilinear_forward(s, desk_grid, mode=mode).values, lin,
                                   rtol=0, atol=1e-12)


def test_newton_and_semi_implicit_agree_to_first_order():
    spec = default_problem(nonlinearity=burgers(), w0=sine_initial_state(DESK, 1, 0.1))
    diffs = []
    for N in (16, 32, 64):
        g = build_grid(DESK, 32, 32, N)
        a = solve_semilinear_forward(spec, g, mode="newton").values
        b = solve_semilinear_forward(spec, g, mode="semi-implicit").values
        diffs.append(np.max(np.abs(a - b)))
    ratios = np.array(diffs[:-1]) / np.array(diffs[1:])
    assert np.all((ratios > 1.7) & (ratios < 2.3))


def test_newton_step_residual(desk_grid):
    spec = default_problem(nonlinearity=burgers(), w0=sine_initial_state(DESK, 1, 0.5))
    w = solve_semilinear_forward(spec, desk_grid, mode="newton")
    assert semilinear_residual(spec, desk_grid, w) < 1e-9


def test_burgers_manufactured_solution_orders():
    spec = mms_spec(nonlinearity=burgers())
    space = convergence_study_semilinear(spec, [build_grid(DESK, n, n, n * n // 8) for n in (8, 16, 32)])
    time = convergence_study_semilinear(spec, [build_grid(DESK, 128, 128, N) for N in (8, 16, 32)])
    assert min(space) >= 1.9
    assert min(time) >= 0.9


def convergence_study_semilinear(spec, grids):
    errs = []
    for g in grids:
        w = solve_semilinear_forward(spec, g, mode="newton")
        X0, X1 = g.mesh()
        errs.append(np.max(np.abs(w.values - exact(X0, X1))))
    return np.log2(np.array(errs[:-1]) / np.array(errs[1:]))


def test_backward_equals_reversed_forward():
    # constant coefficients, no drift: the backward problem is the forward one in reversed time
    spec = default_problem(M=0.7, f_plus=lambda t, x: np.sin(3 * t) * np.cos(x), f_minus=lambda t, x: t * x,
                           r=lambda t: np.cos(5 * t), w0=sine_initial_state(DESK, 2))
    g = build_grid(DESK, 16, 16, 40)
    fwd = solve_linear_forward(spec, g, K=0.0).values
    T = DESK.T
    back = solve_adjoint_backward(spec, g, spec.w0(g.x_nodes),
                                  sources=(lambda t, x: spec.f_plus(T - t, x), lambda t, x: spec.f_minus(T - t, x),
                                           lambda t: spec.r(T - t)))
    np.testing.assert_allclose(back.values[::-1], fwd, rtol=0, atol=1e-10)


def test_backward_manufactured_solution_orders():
    # v = exp(x0) phi(x1) solves -rho dv/dx0 - a v'' + b v' + c v = f with a+ v'(0+) - a- v'(0-) + M dv/dx0 = r
    M = 1.0
    cs = CoefficientSet(_const(RHO), _const(A_PLUS), _const(B), _const(C),
                        _const(RHO), _const(A_MINUS), _const(B), _const(C), 0.5)
    spec = ProblemSpec(DESK, cs, M)
    a_of = lambda x: np.where(x < 0, A_MINUS, A_PLUS)  # noqa: E731
    f = lambda t, x: np.exp(t) * (-RHO * phi(x) - a_of(x) * d2phi(x) + B * dphi(x) + C * phi(x))  # noqa: E731
    r = lambda t: np.exp(t) * (A_PLUS - A_MINUS + M)  # noqa: E731
    v_exact = lambda t, x: np.exp(t) * phi(x)  # noqa: E731

    def errors(grids):
        out = []
        for g in grids:
            v = solve_adjoint_backward(spec, g, v_exact(DESK.T, g.x_nodes), sources=(f, f, r))
            X0, X1 = g.mesh()
            out.append(np.max(np.abs(v.values - v_exact(X0, X1))))
        return np.log2(np.array(out[:-1]) / np.array(out[1:]))

    assert min(errors([build_grid(DESK, n, n, n * n // 8) for n in (8, 16, 32)])) >= 1.9
    assert min(errors([build_grid(DESK, 256, 256, N) for N in (8, 16, 32)])) >= 0.9


def test_backward_rejects_terminal_violating_dirichlet(spec, small_grid):
    with pytest.raises(ValueError, match="vanish"):
        solve_adjoint_backward(spec, small_grid, np.ones(small_grid.n_nodes))


def test_energy_ratio_ensemble_is_stable_under_refinement():
    maxima = []
    for n in (16, 32):
        g = build_grid(DESK, n, n, 2 * n)
        rng = np.random.default_rng(7)
        specs = [random_smooth_problem(rng) for _ in range(20)]
        ratios = [energy_estimate_check(solve_linear_forward(s, g), s, g) for s in specs]
        assert np.all(np.isfinite(ratios))
        assert max(ratios) <= 2 * np.median(ratios)
        maxima.append(max(ratios))
    assert max(maxima) / min(maxima) <= 2.0


def test_energy_ratio_is_scale_invariant(desk_grid):
    s = random_smooth_problem(np.random.default_rng(3))
    from dataclasses import replace

    s2 = replace(s, w0=lambda x: 2 * s.w0(x), f_plus=lambda t, x: 2 * s.f_plus(t, x),
                 f_minus=lambda t, x: 2 * s.f_minus(t, x), r=lambda t: 2 * s.r(t))
    a = energy_estimate_check(solve_linear_forward(s, desk_grid), s)
    b = energy_estimate_check(solve_linear_forward(s2, desk_grid), s2)
    assert b == pytest.approx(a, rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_superposition(seed, alpha, beta):
    g = build_grid(DESK, 8, 8, 12)
    rng = np.random.default_rng(seed)
    s1, s2 = random_smooth_problem(rng), random_smooth_problem(rng)
    combo = default_problem(w0=lambda x: alpha * s1.w0(x) + beta * s2.w0(x),
                            f_plus=lambda t, x: alpha * s1.f_plus(t, x) + beta * s2.f_plus(t, x),
                            f_minus=lambda t, x: alpha * s1.f_minus(t, x) + beta * s2.f_minus(t, x),
                            r=lambda t: alpha * s1.r(t) + beta * s2.r(t))
    w1 = solve_linear_forward(s1, g).values
    w2 = solve_linear_forward(s2, g).values
    w = solve_linear_forward(combo, g).values
    scale = max(1.0, np.max(np.abs(w)))
    assert np.max(np.abs(w - alpha * w1 - beta * w2)) <= 1e-11 * scale


def test_non_finite_step_reported(spec, small_grid):
    bad = np.full((small_grid.n_steps + 1, small_grid.n_nodes), np.nan)
    with pytest.raises(SolverError, match="level 0"):
        solve_linear_forward(spec, small_grid, extra_c=bad)


def test_solution_csv_header(tmp_path, sine_spec, small_grid):
    path = tmp_path / "solution.csv"
    write_solution_csv(solve_linear_forward(sine_spec, small_grid), path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["x0", "x1", "value"]
    assert len(rows) - 1 == (small_grid.n_steps + 1) * small_grid.n_nodes
    assert float(rows[1][0]) == 0.0
