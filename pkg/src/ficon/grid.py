"""Space-time mesh with the interface pinned to a node, plus trapezoidal norms."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import Geometry

__all__ = ["Grid", "SpaceTimeField", "build_grid", "discrete_norm", "trapezoid_weights"]

REGIONS = ("Q+", "Q-", "Q", "omega", "interface", "slice")


def trapezoid_weights(x: np.ndarray) -> np.ndarray:
    """Composite trapezoid weights for (possibly nonuniform) ordered nodes."""
    x = np.asarray(x, dtype=float)
    w = np.zeros_like(x)
    dx = np.diff(x)
    w[:-1] += dx / 2
    w[1:] += dx / 2
    return w


@dataclass(frozen=True)
class Grid:
    geometry: Geometry
    x_nodes: np.ndarray
    n_minus: int
    n_plus: int
    n_steps: int
    d: float
    notes: tuple = ()

    @property
    def dt(self) -> float:
        return self.geometry.T / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def n_nodes(self) -> int:
        return self.x_nodes.size

    @property
    def interface_index(self) -> int:
        return self.n_minus

    @property
    def h_minus(self) -> float:
        return -self.geometry.a / self.n_minus

    @property
    def h_plus(self) -> float:
        return self.geometry.b / self.n_plus

    @property
    def d_index(self) -> int:
        return int(np.argmin(np.abs(self.x_nodes - self.d)))

    @property
    def control_mask(self) -> np.ndarray:
        return self.x_nodes >= self.d - 1e-12 * self.geometry.length

    @property
    def quadrature(self) -> np.ndarray:
        return trapezoid_weights(self.x_nodes)

    @property
    def time_weights(self) -> np.ndarray:
        w = np.full(self.n_steps + 1, self.dt)
        w[0] = w[-1] = self.dt / 2
        return w

    def region_weights(self, region: str) -> np.ndarray:
        """Spatial trapezoid weights restricted to a closed subinterval."""
        x = self.x_nodes
        w = np.zeros_like(x)
        if region == "Q":
            return self.quadrature
        if region == "Q+":
            sel = slice(self.interface_index, None)
        elif region == "Q-":
            sel = slice(0, self.interface_index + 1)
        elif region == "omega":
            sel = slice(self.d_index, None)
        else:
            raise ValueError(f"no spatial weights for region {region!r}")
        w[sel] = trapezoid_weights(x[sel])
        return w

    @property
    def bulk_mask(self) -> np.ndarray:
        """Nodes carrying a PDE row: interior, excluding the interface node."""
        m = np.ones(self.n_nodes, dtype=bool)
        m[0] = m[-1] = False
        m[self.interface_index] = False
        return m

    @property
    def plus_mask(self) -> np.ndarray:
        return np.arange(self.n_nodes) > self.interface_index

    @property
    def minus_mask(self) -> np.ndarray:
        return np.arange(self.n_nodes) < self.interface_index

    def zeros(self) -> "SpaceTimeField":
        return SpaceTimeField(np.zeros((self.n_steps + 1, self.n_nodes)), self)

    def mesh(self):
        """``(X0, X1)`` arrays of shape ``(N + 1, n_nodes)``."""
        return np.meshgrid(self.times, self.x_nodes, indexing="ij")

    def refined(self, factor: int = 2, time: bool = True) -> "Grid":
        return build_grid(self.geometry, self.n_minus * factor, self.n_plus * factor,
                          self.n_steps * (factor if time else 1), quiet=True)


def _snap_count(b: float, d: float, n_plus: int) -> int | None:
    for n in range(n_plus, 2 * n_plus + 1):
        k = d * n / b
        if abs(k - round(k)) < 1e-9:
            return n
    return None


def build_grid(geom: Geometry, n_minus: int, n_plus: int, n_steps: int, quiet: bool = False) -> Grid:
    """Uniform mesh on each side of the interface with nodes at 0 and at d.

    ``n_minus`` / ``n_plus`` are cell counts on ``(a, 0)`` / ``(0, b)``.  When d is
    not a node, ``n_plus`` is raised to the smallest count (up to 2x) that makes it
    one; failing that, d is snapped to the nearest node with a warning.
    """
    for name, n in (("n_minus", n_minus), ("n_plus", n_plus), ("n_steps", n_steps)):
        if int(n) != n or n < 4:
            raise ValueError(f"{name} must be an integer >= 4, got {n}")
    n_minus, n_plus, n_steps = int(n_minus), int(n_plus), int(n_steps)
    notes = []
    d = geom.d
    snapped = _snap_count(geom.b, geom.d, n_plus)
    if snapped is None:
        hp = geom.b / n_plus
        k = min(max(1, round(geom.d / hp)), n_plus - 1)
        d = k * hp
        msg = f"control edge d={geom.d:g} snapped to node {d:g}"
        notes.append(msg)
        if not quiet:
            warnings.warn(msg, stacklevel=2)
    elif snapped != n_plus:
        msg = f"n_plus raised from {n_plus} to {snapped} so that d={geom.d:g} is a node"
        notes.append(msg)
        if not quiet:
            warnings.warn(msg, stacklevel=2)
        n_plus = snapped
    left = geom.a + (np.arange(n_minus) * (-geom.a) / n_minus)
    right = np.arange(n_plus + 1) * (geom.b / n_plus)
    x = np.concatenate([left, right])
    x[-1] = geom.b
    if snapped is not None:
        k = round(geom.d * n_plus / geom.b)
        x[n_minus + k] = geom.d
        d = geom.d
    return Grid(geom, x, n_minus, n_plus, n_steps, float(d), tuple(notes))


@dataclass
class SpaceTimeField:
    """Values on all time levels ``0..N`` and all nodes.

    The interface node stores the single shared value of both sides, so
    continuity across ``x1 = 0`` holds by layout.
    """

    values: np.ndarray
    grid: Grid = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.grid.n_steps + 1, self.grid.n_nodes)
        if self.values.shape != expected:
            raise ValueError(f"field shape {self.values.shape} does not match grid {expected}")

    @property
    def interface_index(self) -> int:
        return self.grid.interface_index

    @property
    def interface(self) -> np.ndarray:
        return self.values[:, self.interface_index]

    @property
    def terminal(self) -> np.ndarray:
        return self.values[-1]

    def d1_plus(self) -> np.ndarray:
        """Second-order one-sided derivative at ``x1 = 0+`` for every level."""
        i, h = self.interface_index, self.grid.h_plus
        v = self.values
        return (-3 * v[:, i] + 4 * v[:, i + 1] - v[:, i + 2]) / (2 * h)

    def d1_minus(self) -> np.ndarray:
        i, h = self.interface_index, self.grid.h_minus
        v = self.values
        return (3 * v[:, i] - 4 * v[:, i - 1] + v[:, i - 2]) / (2 * h)

    def d1(self) -> np.ndarray:
        """Spatial derivative per node; one-sided within each subdomain at its ends."""
        return spatial_derivative(self.values, self.grid)

    def d0(self) -> np.ndarray:
        """Backward difference in time on levels ``1..N`` (shape ``(N, n)``)."""
        return np.diff(self.values, axis=0) / self.grid.dt

    def __add__(self, other):
        return SpaceTimeField(self.values + _vals(other), self.grid)

    def __sub__(self, other):
        return SpaceTimeField(self.values - _vals(other), self.grid)

    def __mul__(self, scalar):
        return SpaceTimeField(self.values * scalar, self.grid)

    __rmul__ = __mul__


def _vals(x):
    return x.values if isinstance(x, SpaceTimeField) else x


def spatial_derivative(values: np.ndarray, grid: Grid, side_at_interface: str = "plus") -> np.ndarray:
    """Second-order derivative along x1 computed separately on each subdomain."""
    v = np.atleast_2d(values)
    out = np.empty_like(v)
    i = grid.interface_index
    for sl, h, sign_side in ((slice(0, i + 1), grid.h_minus, "minus"), (slice(i, None), grid.h_plus, "plus")):
        part = v[:, sl]
        g = np.gradient(part, h, axis=1, edge_order=2)
        if sign_side == "minus":
            out[:, :i] = g[:, :-1]
            if side_at_interface == "minus":
                out[:, i] = g[:, -1]
        else:
            out[:, i + 1:] = g[:, 1:]
            if side_at_interface == "plus":
                out[:, i] = g[:, 0]
    return out.reshape(np.shape(values))


def second_derivative(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Three-point second difference at nodes interior to each subdomain; 0 elsewhere."""
    v = np.atleast_2d(values)
    out = np.zeros_like(v)
    i = grid.interface_index
    hm, hp = grid.h_minus, grid.h_plus
    out[:, 1:i] = (v[:, 2:i + 1] - 2 * v[:, 1:i] + v[:, 0:i - 1]) / hm ** 2
    out[:, i + 1:-1] = (v[:, i + 2:] - 2 * v[:, i + 1:-1] + v[:, i:-2]) / hp ** 2
    return out.reshape(np.shape(values))


def discrete_norm(field, weight=None, region: str = "Q", level: int | None = None) -> float:
    """Trapezoidal ``(integral of weight * field^2)^(1/2)`` over a region.

    ``region`` is one of ``Q+``, ``Q-``, ``Q``, ``omega`` (space-time),
    ``interface`` (the line ``x1 = 0``) or ``slice`` (one time level, default N).
    ``field`` may be a SpaceTimeField or, for ``interface``, a 1-D array paired
    with ``weight`` of matching length.
    """
    if region not in REGIONS:
        raise ValueError(f"unknown region {region!r}; expected one of {REGIONS}")
    grid = field.grid
    vals = field.values
    if weight is None:
        weight = 1.0
    weight = np.asarray(_vals(weight), dtype=float)
    if region == "interface":
        line = vals[:, grid.interface_index]
        if weight.ndim == 2:
            weight = weight[:, grid.interface_index]
        wt = np.broadcast_to(weight, line.shape)
        return math.sqrt(float(np.sum(grid.time_weights * wt * line ** 2)))
    if region == "slice":
        k = grid.n_steps if level is None else level
        row = vals[k]
        if weight.ndim == 2:
            weight = weight[k]
        wt = np.broadcast_to(weight, row.shape)
        return math.sqrt(float(np.sum(grid.quadrature * wt * row ** 2)))
    try:
        wt = np.broadcast_to(weight, vals.shape)
    except ValueError as exc:
        raise ValueError(f"weight shape {weight.shape} does not match field {vals.shape}") from exc
    wx = grid.region_weights(region)
    q = np.outer(grid.time_weights, wx)
    integrand = q * wt * vals ** 2
    return math.sqrt(float(np.sum(integrand[q > 0])))
