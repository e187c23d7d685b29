"""Carleman weight system and the penalty weights of the control problem.

Spatial profiles::

    psi1(x1) = (x1 + beta)^2
    psi2(x1) = psi1(0) * exp(psi1(x1) - psi1(0))

Space-time weights::

    phi_j(x) = (exp(lam * psi_j(x1)) - exp(lam * C_shift)) / (x0^3 (T - x0)^3)
    phi_star = phi2 on x1 > 0, phi1 on x1 < 0
    psi_star(x) = s_hat * phi_star(max(x0, T/2), x1)

``psi_star_eps`` additionally freezes ``psi_star`` for ``x0 >= T - eps``.
Exponentials of weights that blow up or vanish at ``x0 = T`` are evaluated in
the log domain with exponents clamped to ``[-700, 700]``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .grid import Grid
from .model import Geometry

__all__ = [
    "WeightError",
    "WeightParameters",
    "WeightSystem",
    "OrderingReport",
    "build_weight_system",
    "verify_ordering",
    "penalty_factors",
    "exp_clamped",
    "theta_profile",
    "export_weights_csv",
]

EXP_CLAMP = 700.0


class WeightError(ValueError):
    """Weight construction failed (overflow or invalid parameter)."""


def exp_clamped(x):
    with np.errstate(invalid="ignore"):
        return np.exp(np.clip(x, -EXP_CLAMP, EXP_CLAMP))


@dataclass(frozen=True)
class WeightParameters:
    lam: float = 0.005
    s_hat: float = 1e-5
    C_shift: float | None = None
    beta: float = 2.0
    epsilon_freeze: float | None = None
    m_variant: str = "unit"
    psi_form: str = "frozen"

    def __post_init__(self):
        if not self.lam > 0:
            raise WeightError(f"lam must be positive, got {self.lam}")
        if not self.s_hat > 0:
            raise WeightError(f"s_hat must be positive, got {self.s_hat}")
        if self.m_variant not in ("unit", "power"):
            raise WeightError(f"m_variant must be 'unit' or 'power', got {self.m_variant!r}")
        if self.psi_form not in ("frozen", "separable"):
            raise WeightError(f"psi_form must be 'frozen' or 'separable', got {self.psi_form!r}")


def theta_profile(x0, T: float):
    """C^2 profile equal to x0 on [0, T/4] and T - x0 on [3T/4, T], maximal at T/2."""
    x0 = np.asarray(x0, dtype=float)
    q = T / 4
    s = x0 - T / 2
    middle = 13 * q / 8 - 3 * s ** 2 / (4 * q) + s ** 4 / (8 * q ** 3)
    return np.where(x0 <= q, x0, np.where(x0 >= 3 * q, T - x0, middle))


@dataclass(frozen=True)
class WeightSystem:
    geometry: Geometry
    params: WeightParameters
    C_shift: float
    epsilon_freeze: float

    # ---- spatial profiles -------------------------------------------------
    def psi1(self, x1):
        return (np.asarray(x1, dtype=float) + self.params.beta) ** 2

    def psi2(self, x1):
        c = self.params.beta ** 2
        return c * np.exp(self.psi1(x1) - c)

    def numerator(self, x1, which: int):
        psi = self.psi1(x1) if which == 1 else self.psi2(x1)
        lam = self.params.lam
        return np.exp(lam * psi) - math.exp(lam * self.C_shift)

    def numerator_star(self, x1):
        x1 = np.asarray(x1, dtype=float)
        return np.where(x1 > 0, self.numerator(x1, 2), self.numerator(x1, 1))

    # ---- space-time weights ----------------------------------------------
    def _time_denominator(self, x0):
        x0 = np.asarray(x0, dtype=float)
        T = self.geometry.T
        return x0 ** 3 * (T - x0) ** 3

    def phi(self, x0, x1, which: int):
        with np.errstate(divide="ignore"):
            return self.numerator(x1, which) / self._time_denominator(x0)

    def phi_star(self, x0, x1):
        with np.errstate(divide="ignore"):
            return self.numerator_star(x1) / self._time_denominator(x0)

    def theta(self, x0):
        return theta_profile(x0, self.geometry.T)

    def eta(self, x1):
        """Spatial profile with ``psi_star(T/2, x1) = eta(x1) / (T/2)^3``."""
        T = self.geometry.T
        return self.params.s_hat * self.numerator_star(x1) / (T / 2) ** 3

    def psi_star(self, x0, x1):
        T = self.geometry.T
        x0, x1 = np.broadcast_arrays(np.asarray(x0, float), np.asarray(x1, float))
        if self.params.psi_form == "separable":
            with np.errstate(divide="ignore"):
                return self.eta(x1) / (T - x0) ** 3
        return self.params.s_hat * self.phi_star(np.maximum(x0, T / 2), x1)

    def psi_star_eps(self, x0, x1, epsilon: float | None = None):
        eps = self.epsilon_freeze if epsilon is None else epsilon
        T = self.geometry.T
        x0 = np.asarray(x0, dtype=float)
        return self.psi_star(np.minimum(x0, T - eps), x1)

    # ---- log-domain weight combinations ----------------------------------
    def log_power(self, x0, power: float):
        """``power * log(T - x0)`` with ``log 0 = -inf``."""
        with np.errstate(divide="ignore"):
            return power * np.log(np.maximum(self.geometry.T - np.asarray(x0, float), 0.0))

    def weighted_exp(self, x0, x1, power: float, psi_coef: float, frozen: bool = False):
        """``(T - x0)^power * exp(psi_coef * psi)`` evaluated with clamping.

        Positive powers vanish at ``x0 = T`` regardless of the exponential.
        """
        psi = self.psi_star_eps(x0, x1) if frozen else self.psi_star(x0, x1)
        x0b = np.broadcast_to(np.asarray(x0, float), np.shape(psi))
        with np.errstate(invalid="ignore"):
            expo = np.clip(psi_coef * psi, -EXP_CLAMP, EXP_CLAMP)
            if power == 0:
                return np.exp(expo)
            out = np.exp(np.clip(self.log_power(x0b, power) + expo, -EXP_CLAMP, EXP_CLAMP))
        at_T = x0b >= self.geometry.T
        if power > 0:
            out = np.where(at_T, 0.0, out)
        return out


def build_weight_system(geom: Geometry, params: WeightParameters | None = None) -> WeightSystem:
    params = WeightParameters() if params is None else params
    psi2_b = params.beta ** 2 * math.exp((geom.b + params.beta) ** 2 - params.beta ** 2)
    C = psi2_b + 1.0 if params.C_shift is None else float(params.C_shift)
    if not C > psi2_b:
        raise WeightError(f"C_shift={C:g} must exceed psi2(b)={psi2_b:g} so that phi_j < 0")
    for name, expo in (("lam (exp(lam * psi2(b)))", params.lam * psi2_b),
                       ("C_shift (exp(lam * C_shift))", params.lam * C)):
        if not np.isfinite(expo) or expo > 709.0:
            raise WeightError(f"overflow: exponent {expo:.4g} too large; reduce {name}")
    eps = geom.T / 4 if params.epsilon_freeze is None else float(params.epsilon_freeze)
    if not 0 < eps < geom.T / 2:
        raise WeightError(f"epsilon_freeze must lie in (0, T/2), got {eps}")
    ws = WeightSystem(geom, params, C, eps)
    xs = np.linspace(geom.a, geom.b, 257)
    frozen_max = float(np.max(-2 * ws.psi_star_eps(np.full_like(xs, geom.T), xs)))
    if not np.isfinite(frozen_max) or frozen_max > EXP_CLAMP:
        raise WeightError(f"overflow: exp(-2 psi_star_eps) reaches exp({frozen_max:.4g}); "
                          "reduce s_hat or increase epsilon_freeze")
    return ws


@dataclass
class OrderingReport:
    passed: bool
    margin_plus: float
    margin_minus: float
    interface_rel_gap: float
    psi_star_max: float
    violations: dict

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"ordering {status}: min(phi2-phi1) on Q+ = {self.margin_plus:.3e}, "
                f"min(phi1-phi2) on Q- = {self.margin_minus:.3e}, "
                f"interface gap = {self.interface_rel_gap:.1e}, max psi* = {self.psi_star_max:.3e}")


def verify_ordering(ws: WeightSystem, grid: Grid) -> OrderingReport:
    """Pointwise check of phi2 > phi1 on Q+, phi1 > phi2 on Q-, equality at x1 = 0, psi* < 0.

    Evaluated at all grid nodes with ``0 < x0 < T`` (the weights are infinite on
    the end levels).  Margins are scaled by ``x0^3 (T - x0)^3`` so they compare
    the spatial numerators.
    """
    X0, X1 = grid.mesh()
    inner = (X0 > 0) & (X0 < grid.geometry.T)
    with np.errstate(invalid="ignore", divide="ignore"):
        p1 = ws.phi(X0, X1, 1)
        p2 = ws.phi(X0, X1, 2)
    plus = inner & (X1 > 0)
    minus = inner & (X1 < 0)
    iface = inner & (X1 == 0)
    with np.errstate(invalid="ignore"):
        diff = (p2 - p1) * ws._time_denominator(X0)
    margin_plus = float(np.min(diff[plus])) if plus.any() else math.inf
    margin_minus = float(np.min(-diff[minus])) if minus.any() else math.inf
    with np.errstate(invalid="ignore", divide="ignore"):
        gap = np.abs(p1 - p2)[iface] / np.abs(p1[iface])
    gap = float(np.max(gap)) if gap.size else 0.0
    psi = ws.psi_star(X0[inner], X1[inner])
    psi_max = float(np.max(psi))
    violations = {
        "plus": [(float(a), float(b)) for a, b in zip(X0[plus & ~(diff > 0)], X1[plus & ~(diff > 0)])],
        "minus": [(float(a), float(b)) for a, b in zip(X0[minus & ~(diff < 0)], X1[minus & ~(diff < 0)])],
        "interface": [] if gap <= 1e-12 else ["relative gap %.3e" % gap],
        "psi_star": [] if psi_max < 0 else ["max psi* = %.3e" % psi_max],
    }
    passed = margin_plus > 0 and margin_minus > 0 and gap <= 1e-12 and psi_max < 0
    return OrderingReport(passed, margin_plus, margin_minus, gap, psi_max, violations)


def penalty_factors(ws: WeightSystem, grid: Grid) -> dict[str, np.ndarray]:
    """All penalty-weight fields on the grid nodes, shape ``(N + 1, n_nodes)``.

    ``m`` follows ``ws.params.m_variant``: ``unit`` uses 1 on Q-, ``power``
    uses ``(T - x0)^9``; both use ``(T - x0)^15`` on Q+.
    """
    X0, X1 = grid.mesh()
    T = grid.geometry.T
    tau = np.maximum(T - X0, 0.0)
    plus = X1 > 0
    m_minus = np.ones_like(X0) if ws.params.m_variant == "unit" else tau ** 9
    m = np.where(plus, tau ** 15, m_minus)
    psi_eps = ws.psi_star_eps(X0, X1)
    out = {
        "m": m,
        "psi_star_eps": psi_eps,
        "exp_m2psi_eps": exp_clamped(-2 * psi_eps),
        "exp_psi_star": ws.weighted_exp(X0, X1, 0.0, 1.0),
        "mu1": np.where(plus, ws.weighted_exp(X0, X1, 30.0, -2.0),
                        ws.weighted_exp(X0, X1, 15.0 + (0 if ws.params.m_variant == "unit" else 9), -2.0)),
        "mu2": ws.weighted_exp(X0, X1, 15.0, -2.0),
        "pow3": tau ** 3,
        "pow15_2": tau ** 7.5,
        "pow9_2": tau ** 4.5,
        "pow15": tau ** 15,
    }
    for name, arr in out.items():
        if not np.all(np.isfinite(arr)):
            raise WeightError(f"penalty factor {name} is not finite on the grid")
    return out


def export_weights_csv(ws: WeightSystem, grid: Grid, path) -> None:
    """Write ``x0, x1, phi1, phi2, psi_star`` for every node with ``0 < x0 < T``."""
    X0, X1 = grid.mesh()
    T = grid.geometry.T
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x0", "x1", "phi1", "phi2", "psi_star"])
        for x0, x1 in zip(X0.ravel(), X1.ravel()):
            if 0 < x0 < T:
                w.writerow([repr(float(x0)), repr(float(x1)),
                            repr(float(ws.phi(x0, x1, 1))), repr(float(ws.phi(x0, x1, 2))),
                            repr(float(ws.psi_star(x0, x1)))])
