"""Observed convergence orders of the forward scheme against a known solution.

The solution exp(-t) phi(x) has a kink at the interface, distinct diffusion on
each side and a point mass M = 1, so the interface source is nontrivial.
"""

import numpy as np

from ficon import Geometry, build_grid
from ficon.forward import convergence_study
from ficon.model import CoefficientSet, ProblemSpec, _const

GEOMETRY = Geometry(-1.0, 1.0, 0.5, 1.0)
A_PLUS, A_MINUS, RHO, DRIFT, REACTION, MASS = 2.0, 0.5, 1.5, 0.3, 0.7, 1.0


def phi(x):
    return np.where(x < 0, (x + 1) * np.cos(x), (1 - x) * (1 + 2 * x))


def dphi(x):
    return np.where(x < 0, np.cos(x) - (x + 1) * np.sin(x), 1 - 4 * x)


def d2phi(x):
    return np.where(x < 0, -2 * np.sin(x) - (x + 1) * np.cos(x), -4.0 + 0 * x)


def exact(t, x):
    return np.exp(-t) * phi(x)


def source(t, x):
    a = np.where(x < 0, A_MINUS, A_PLUS)
    return np.exp(-t) * (-RHO * phi(x) - a * d2phi(x) + DRIFT * dphi(x) + REACTION * phi(x))


def main():
    coeffs = CoefficientSet(_const(RHO), _const(A_PLUS), _const(DRIFT), _const(REACTION),
                            _const(RHO), _const(A_MINUS), _const(DRIFT), _const(REACTION), 0.5)
    spec = ProblemSpec(GEOMETRY, coeffs, MASS, f_plus=source, f_minus=source,
                       r=lambda t: np.exp(-t) * (A_PLUS - A_MINUS + MASS), w0=phi)
    space = convergence_study(spec, [build_grid(GEOMETRY, n, n, n * n // 8) for n in (8, 16, 32, 64)], exact)
    time = convergence_study(spec, [build_grid(GEOMETRY, 256, 256, n) for n in (8, 16, 32, 64)], exact)
    print("space (dt ~ h^2): errors", ["%.3e" % e for e in space["errors"]],
          "orders", ["%.3f" % o for o in space["orders"]])
    print("time (h = 1/256): errors", ["%.3e" % e for e in time["errors"]],
          "orders", ["%.3f" % o for o in time["orders"]])


if __name__ == "__main__":
    main()
