"""Penalized null control of a sine initial state over a range of penalty weights.

For each epsilon the control is re-simulated through the unpenalized scheme and
the terminal norm of that state is reported alongside the relaxed one.
"""

from ficon import Geometry, build_grid
from ficon.hum import ControlProblem, duality_identity, epsilon_sweep, recover_adjoint_and_check, \
    solve_penalized_control
from ficon.model import default_problem, sine_initial_state
from ficon.weights import build_weight_system

GEOMETRY = Geometry(-1.0, 1.0, 0.5, 1.0)


def main():
    grid = build_grid(GEOMETRY, 32, 32, 64)
    ws = build_weight_system(GEOMETRY)
    spec = default_problem(w0=sine_initial_state(GEOMETRY))
    cp = ControlProblem(spec, grid, ws, 1e-2)
    sol = solve_penalized_control(cp)
    print("optimality residuals:", {k: "%.1e" % v for k, v in recover_adjoint_and_check(sol, cp).items()})
    print("duality gap: %.1e" % duality_identity(sol, cp)["gap"])
    print("%8s %14s %14s %14s" % ("epsilon", "terminal", "relaxed", "pde residual"))
    for row in epsilon_sweep(cp, [1e-1, 1e-2, 1e-3, 1e-4, 1e-5]):
        print("%8.0e %14.4e %14.4e %14.4e" % (row["epsilon"], row["terminal_norm"],
                                              row["penalized_terminal_norm"], row["pde_residual"]))


if __name__ == "__main__":
    main()
