"""Weighted observability ratios of random adjoint solutions and their mesh sensitivity."""

from ficon import Geometry, build_grid
from ficon.model import default_problem
from ficon.observability import ensemble_constant, find_s_hat_threshold, refinement_drift
from ficon.weights import WeightParameters, build_weight_system

GEOMETRY = Geometry(-1.0, 1.0, 0.5, 1.0)


def main():
    grid = build_grid(GEOMETRY, 16, 16, 32)
    ws = build_weight_system(GEOMETRY)
    spec = default_problem()
    report = ensemble_constant(spec, grid, ws, 20, seed=0)
    print("20 samples at s_hat=%g: max %.3f median %.3f min %.3f"
          % (report["s_hat"], report["max"], report["median"], report["min"]))
    print("max ratio over s_hat:", report["s_hat_sweep"])
    for s_hat in (1e-6, 1e-5, 1e-4, 1e-3, 1e-2):
        row = refinement_drift(spec, grid, build_weight_system(GEOMETRY, WeightParameters(s_hat=s_hat)))
        print("s_hat %-6g max ratio %.3g -> %.3g under refinement (drift %.2f)"
              % (s_hat, row["coarse"], row["fine"], row["drift"]))
    search = find_s_hat_threshold(spec, grid, ws, [1e-6, 1e-5, 1e-4])
    print("smallest s_hat with drift <= 2:", search["threshold"])


if __name__ == "__main__":
    main()
