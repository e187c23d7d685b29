"""Steer a perturbed Burgers state onto a time-varying target trajectory."""

import math

import numpy as np

from ficon import Geometry, build_grid
from ficon.model import burgers, default_problem, sine_initial_state
from ficon.trajectory import bump_control, make_target_trajectory, solve_trajectory_control
from ficon.weights import build_weight_system

GEOMETRY = Geometry(-1.0, 1.0, 0.5, 1.0)


def main():
    grid = build_grid(GEOMETRY, 16, 16, 32)
    ws = build_weight_system(GEOMETRY)
    spec = default_problem(nonlinearity=burgers(), w0=sine_initial_state(GEOMETRY, 1, 0.5))
    target = make_target_trajectory(spec, grid, bump_control(grid, 2.0))
    print("target residual %.1e" % target.residual)
    x = grid.x_nodes
    for amp in (1e-2, 1e-1, 3e-1):
        w0 = target.w_bar.values[0] + amp * np.sin(math.pi * (x - GEOMETRY.a) / GEOMETRY.length)
        res = solve_trajectory_control(spec, grid, ws, target, w0, tol=1e-6, max_iters=12)
        errs = ", ".join("%.2e" % h["terminal_error"] for h in res.history)
        print("perturbation %.0e: %d iterates, terminal errors [%s]" % (amp, res.iterations, errs))


if __name__ == "__main__":
    main()
