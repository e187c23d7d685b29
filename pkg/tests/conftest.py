import math

import numpy as np
import pytest

from ficon.grid import build_grid
from ficon.model import Geometry, default_problem, sine_initial_state
from ficon.weights import build_weight_system

DESK = Geometry(-1.0, 1.0, 0.5, 1.0)


@pytest.fixture
def geom():
    return DESK


@pytest.fixture
def spec():
    return default_problem()


@pytest.fixture
def sine_spec():
    return default_problem(w0=sine_initial_state(DESK))


@pytest.fixture
def small_grid():
    return build_grid(DESK, 8, 8, 16)


@pytest.fixture
def desk_grid():
    return build_grid(DESK, 16, 16, 32)


@pytest.fixture
def ws():
    return build_weight_system(DESK)


def random_smooth_problem(rng, **extra):
    """Five-mode initial state, smooth bulk source and interface source."""
    coeffs = rng.standard_normal(5) / np.arange(1, 6)
    k = np.arange(1, 6)
    amp_f, amp_r, phase = rng.standard_normal(3)

    def w0(x1):
        x1 = np.asarray(x1, dtype=float)
        return coeffs @ np.sin(np.outer(k, math.pi * (x1.ravel() - DESK.a) / DESK.length)).reshape(5, -1) \
            if x1.ndim else float(coeffs @ np.sin(k * math.pi * (x1 - DESK.a) / DESK.length))

    def w0_shaped(x1):
        x1 = np.asarray(x1, dtype=float)
        return np.reshape(w0(x1), x1.shape)

    def f(x0, x1):
        return amp_f * np.cos(math.pi * x0) * np.sin(math.pi * x1)

    return default_problem(w0=w0_shaped, f_plus=f, f_minus=f,
                           r=lambda t: amp_r * np.cos(2 * np.asarray(t) + phase), **extra)
