"""Acceptance suite: one test per primary criterion, each printing a PASS/FAIL line."""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from ficon.forward import (convergence_study, energy_estimate_check, solve_adjoint_backward, solve_linear_forward,
                           solve_semilinear_forward)
from ficon.grid import build_grid
from ficon.hum import (ControlProblem, duality_identity, epsilon_sweep, recover_adjoint_and_check,
                       simulate_control, solve_penalized_control)
from ficon.model import ConfigError, burgers, default_problem, sine_initial_state
from ficon.observability import (ensemble_constant, find_s_hat_threshold, observability_ratio,
                                 refinement_drift, write_report_json)
from ficon.trajectory import bump_control, make_target_trajectory, solve_trajectory_control
from ficon.weights import WeightParameters, build_weight_system, verify_ordering

from .conftest import DESK, random_smooth_problem
from .test_forward import exact, mms_spec
from .test_hum import smooth_problem

FIXTURES = Path(__file__).parent / "fixtures"
SWEEP_EPSILONS = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
S_HAT_LADDER = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2]


def criterion(capsys, number, title, budget_s, check):
    """Run ``check``; print one PASS/FAIL line with its summary and wall time."""
    start = time.perf_counter()
    try:
        detail = check()
        elapsed = time.perf_counter() - start
        assert elapsed < budget_s, f"runtime {elapsed:.1f}s exceeds {budget_s}s"
    except BaseException as exc:
        with capsys.disabled():
            print(f"\nFAIL [{number}] {title}: {exc}")
        raise
    with capsys.disabled():
        print(f"\nPASS [{number}] {title}: {detail} ({elapsed:.2f}s)")


def test_manufactured_convergence(capsys):
    def check():
        spec = mms_spec(M=1.0)
        assert spec.M == 1.0 and spec.r(0.3) != 0.0
        space = convergence_study(spec, [build_grid(DESK, n, n, n * n // 8) for n in (8, 16, 32, 64)], exact)
        time_ = convergence_study(spec, [build_grid(DESK, 256, 256, N) for N in (8, 16, 32, 64)], exact)
        assert min(space["orders"]) >= 1.9, space["orders"]
        assert min(time_["orders"]) >= 0.9, time_["orders"]
        return (f"space orders {[round(o, 3) for o in space['orders']]}, "
                f"time orders {[round(o, 3) for o in time_['orders']]}")

    criterion(capsys, 1, "manufactured-solution convergence", 30, check)


def test_energy_estimate(capsys):
    def check():
        maxima = []
        for n in (16, 32):
            g = build_grid(DESK, n, n, 2 * n)
            rng = np.random.default_rng(7)
            specs = [random_smooth_problem(rng) for _ in range(20)]
            ratios = [energy_estimate_check(solve_linear_forward(s, g), s, g) for s in specs]
            assert np.all(np.isfinite(ratios))
            maxima.append(max(ratios))
        drift = max(maxima) / min(maxima)
        assert drift <= 2.0, maxima
        return f"max ratio {maxima[0]:.3f} -> {maxima[1]:.3f}, drift {drift:.3f}"

    criterion(capsys, 2, "discrete energy estimate", 60, check)


def test_weight_ordering(capsys, desk_grid):
    def check():
        good = verify_ordering(build_weight_system(DESK), desk_grid)
        assert good.passed and good.margin_plus > 0 and good.margin_minus > 0
        bad = verify_ordering(build_weight_system(DESK, WeightParameters(beta=0.5)), desk_grid)
        assert not bad.passed and any(bad.violations.values())
        return f"margins {good.margin_plus:.3g}/{good.margin_minus:.3g}; beta=0.5 flagged"

    criterion(capsys, 3, "weight ordering", 1, check)


def control_case(grid, ws):
    cp = ControlProblem(smooth_problem(), grid, ws, 1e-2)
    return cp, solve_penalized_control(cp)


def test_kkt_exactness(capsys, ws):
    def check():
        worst = 0.0
        for n in (16, 32):
            cp, sol = control_case(build_grid(DESK, n, n, 2 * n), ws)
            assert sol.z.values.size <= 1e5
            res = recover_adjoint_and_check(sol, cp)
            assert max(res.values()) <= 1e-6, res
            worst = max(worst, *res.values())
        return f"max residual {worst:.2e} on grids 16/16/32 and 32/32/64"

    criterion(capsys, 4, "optimality-system residuals", 120, check)


def test_duality_identity(capsys, desk_grid, ws):
    def check():
        cp, sol = control_case(desk_grid, ws)
        d = duality_identity(sol, cp)
        assert d["gap"] <= 1e-6, d
        return f"gap {d['gap']:.2e} (single J with mass term); literal doubled form tracked separately"

    criterion(capsys, 5, "duality identity", 120, check)


@pytest.mark.xfail(strict=True, reason="the doubled identity without the interface mass term fails at the optimum")
def test_duality_identity_doubled_form(capsys, desk_grid, ws):
    cp, sol = control_case(desk_grid, ws)
    gap = duality_identity(sol, cp)["gap_doubled"]
    with capsys.disabled():
        print(f"\nXFAIL [5b] doubled duality form: gap {gap:.3g}")
    assert gap <= 1e-6


def test_null_control_decay(capsys, ws):
    def check():
        g = build_grid(DESK, 32, 32, 64)
        spec = default_problem(w0=sine_initial_state(DESK))
        rows = epsilon_sweep(ControlProblem(spec, g, ws, 1.0), SWEEP_EPSILONS)
        norms = [r["terminal_norm"] for r in rows]
        assert all(b < a for a, b in zip(norms, norms[1:])), norms
        fixture = json.loads((FIXTURES / "sweep.json").read_text())
        floor = fixture["floor_index"]
        stop = len(norms) - 1 if floor is None else floor
        factors = [a / b for a, b in zip(norms, norms[1:])]
        assert all(f >= 2.0 for f in factors[:stop]), factors
        np.testing.assert_allclose(norms, fixture["terminal_norms"], rtol=1e-6)
        return "decay factors per decade " + ", ".join(f"{f:.1f}" for f in factors)

    criterion(capsys, 6, "null-control decay", 600, check)


def test_trajectory_controllability(capsys, desk_grid, ws):
    def check():
        spec = default_problem(nonlinearity=burgers(), w0=sine_initial_state(DESK, 1, 0.5))
        traj = make_target_trajectory(spec, desk_grid, bump_control(desk_grid, 2.0))
        assert np.ptp(traj.w_bar.values[-1]) > 0 and not np.allclose(traj.w_bar.values[0], traj.terminal)
        x = desk_grid.x_nodes
        w0 = traj.w_bar.values[0] + 1e-2 * np.sin(math.pi * (x - DESK.a) / DESK.length)
        res = solve_trajectory_control(spec, desk_grid, ws, traj, w0, tol=1e-4, max_iters=8)
        err = res.history[-1]["terminal_error"]
        assert res.iterations <= 8 and err <= 1e-4

        lin = default_problem(w0=sine_initial_state(DESK))
        ltraj = make_target_trajectory(lin, desk_grid, bump_control(desk_grid))
        lw0 = ltraj.w_bar.values[0] + 1e-2 * np.sin(math.pi * (x - DESK.a) / DESK.length)
        lres = solve_trajectory_control(lin, desk_grid, ws, ltraj, lw0)
        zero = lambda x0, x1: np.zeros(np.broadcast(x0, x1).shape)  # noqa: E731
        z0 = lw0 - ltraj.w_bar.values[0]
        z0[0] = z0[-1] = 0.0
        ref = solve_penalized_control(ControlProblem(default_problem(f_plus=zero, f_minus=zero), desk_grid, ws,
                                                     1e-8, z0=z0))
        assert lres.iterations == 1
        assert np.array_equal(lres.inner.u.values, ref.u.values)
        return f"Burgers: {res.iterations} iterates, error {err:.2e}; linear: 1 iterate, bitwise match"

    criterion(capsys, 7, "controllability to a trajectory", 900, check)


def test_observability_inequality(capsys, tmp_path):
    def check():
        spec = default_problem()
        g = build_grid(DESK, 16, 16, 32)
        ws = build_weight_system(DESK)
        search = find_s_hat_threshold(spec, g, ws, S_HAT_LADDER, n_samples=20, seed=0)
        assert search["threshold"] is not None, search
        s_hat = 2 * search["threshold"]
        ws2 = build_weight_system(DESK, WeightParameters(s_hat=s_hat))
        drift = refinement_drift(spec, g, ws2, 20, seed=0)
        assert drift["drift"] <= 2.0, drift
        reports = [ensemble_constant(spec, g, ws2, 20, seed=0) for _ in range(2)]
        for i, rep in enumerate(reports):
            write_report_json(rep, tmp_path / f"r{i}.json")
        assert (tmp_path / "r0.json").read_bytes() == (tmp_path / "r1.json").read_bytes()
        for case in reports[0]["cases"]:
            scaled = observability_ratio(spec, g, ws2, case.data.scaled(1e3)).ratio
            assert abs(scaled - case.ratio) <= 1e-12 * case.ratio
        return (f"threshold {search['threshold']:g}, s_hat {s_hat:g}, drift {drift['drift']:.3f}, "
                f"max ratio {reports[0]['max']:.3f}")

    criterion(capsys, 8, "observability inequality", 600, check)


def test_linearity_and_zero_preservation(capsys, desk_grid, ws):
    def check():
        rng = np.random.default_rng(11)
        s1, s2 = random_smooth_problem(rng), random_smooth_problem(rng)
        al, be = 1.7, -0.6
        combo = default_problem(w0=lambda x: al * s1.w0(x) + be * s2.w0(x),
                                f_plus=lambda t, x: al * s1.f_plus(t, x) + be * s2.f_plus(t, x),
                                f_minus=lambda t, x: al * s1.f_minus(t, x) + be * s2.f_minus(t, x),
                                r=lambda t: al * s1.r(t) + be * s2.r(t))
        worst = 0.0
        for solver in (lambda s: solve_linear_forward(s, desk_grid).values,
                       lambda s: solve_penalized_control(ControlProblem(s, desk_grid, ws, 1e-2)).u.values):
            w1, w2, w = solver(s1), solver(s2), solver(combo)
            err = np.max(np.abs(w - al * w1 - be * w2)) / max(1.0, np.max(np.abs(w)))
            assert err <= 1e-11, err
            worst = max(worst, err)

        zero = default_problem()
        assert not np.any(solve_linear_forward(zero, desk_grid).values)
        assert not np.any(solve_semilinear_forward(default_problem(nonlinearity=burgers()), desk_grid).values)
        assert not np.any(solve_adjoint_backward(zero, desk_grid, np.zeros(desk_grid.n_nodes)).values)
        cp = ControlProblem(zero, desk_grid, ws, 1e-2)
        sol = solve_penalized_control(cp)
        assert sol.J_value == 0.0
        for f in (sol.u, sol.z, sol.p, simulate_control(sol, cp)):
            assert not np.any(f.values)
        traj = make_target_trajectory(default_problem(nonlinearity=burgers()), desk_grid)
        res = solve_trajectory_control(traj.spec, desk_grid, ws, traj, np.zeros(desk_grid.n_nodes))
        assert not np.any(res.control.values) and not np.any(res.state.values)
        with pytest.raises(ConfigError, match="vacuous"):
            observability_ratio(zero, desk_grid, ws, (None, None, None, np.zeros(desk_grid.n_nodes)))
        return f"worst superposition error {worst:.1e}; zero data stays zero in every module"

    criterion(capsys, 9, "linearity and zero preservation", 60, check)
