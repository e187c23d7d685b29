"""Problem data for the two-domain parabolic system with a point-mass interface.

The state ``w`` lives on ``Q = (0, T) x (a, b)`` and is split at ``x1 = 0`` into
``w_plus`` on ``(0, b)`` and ``w_minus`` on ``(a, 0)``.  In each piece

    rho * dw/dx0 - a * d2w/dx1^2 + b * dw/dx1 + c * w + g(x, w, dw/dx1) = f (+ u on omega)

and the two pieces are glued at the interface by continuity and the flux jump

    a_plus * dw_plus/dx1 - a_minus * dw_minus/dx1 = M * dw/dx0 + r.

Coefficients and data come either from Python callables or from the closed
preset catalogue used by :func:`build_problem`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping

import numpy as np

__all__ = [
    "ConfigError",
    "Geometry",
    "Coefficient",
    "CoefficientSet",
    "Nonlinearity",
    "ProblemSpec",
    "build_problem",
    "eval_nonlinearity",
    "make_coefficient",
    "make_time_function",
    "make_space_function",
    "make_nonlinearity",
    "burgers",
]

SAMPLES_PER_AXIS = 64


class ConfigError(ValueError):
    """Raised when problem data violate the standing assumptions."""


@dataclass(frozen=True)
class Geometry:
    a: float
    b: float
    d: float
    T: float

    def __post_init__(self):
        if not self.a < 0:
            raise ConfigError(f"left endpoint a must be negative, got {self.a}")
        if not self.b > 0:
            raise ConfigError(f"right endpoint b must be positive, got {self.b}")
        if not 0 < self.d < self.b:
            raise ConfigError(f"control window edge d must lie in (0, b), got {self.d}")
        if not self.T > 0:
            raise ConfigError(f"time horizon T must be positive, got {self.T}")

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def c0(self) -> float:
        return max(self.b, -self.a)


@dataclass(frozen=True)
class Coefficient:
    """Vectorised scalar field ``(x0, x1) -> value`` with a readable label."""

    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    label: str = "custom"
    constant: float | None = None

    def __call__(self, x0, x1):
        x0 = np.asarray(x0, dtype=float)
        x1 = np.asarray(x1, dtype=float)
        if self.constant is not None:
            return np.full(np.broadcast(x0, x1).shape, self.constant)
        return np.broadcast_to(np.asarray(self.func(x0, x1), dtype=float),
                               np.broadcast(x0, x1).shape).copy()


def _const(value: float) -> Coefficient:
    value = float(value)
    return Coefficient(lambda x0, x1: np.full(np.broadcast(x0, x1).shape, value),
                       label=f"constant({value:g})", constant=value)


def make_coefficient(entry: Any) -> Coefficient:
    """Build a coefficient from a catalogue entry.

    Accepted forms: a number; a callable; or a mapping with ``preset`` one of

    * ``constant``: ``value``
    * ``affine``: ``c0 + ct * x0 + cx * x1``
    * ``sinusoidal``: ``base + amp * sin(omega * x0 + phase) * (x1 if times_x1)``
    * ``sine_mode``: ``amp * exp(growth * x0) * sin(k * pi * (x1 - lo) / (hi - lo))``
    """
    if isinstance(entry, Coefficient):
        return entry
    if entry is None:
        return _const(0.0)
    if isinstance(entry, (int, float)):
        return _const(entry)
    if callable(entry):
        return Coefficient(entry)
    if not isinstance(entry, Mapping) or "preset" not in entry:
        raise ConfigError(f"unrecognised coefficient entry: {entry!r}")
    preset = entry["preset"]
    if preset == "constant":
        return _const(entry.get("value", 0.0))
    if preset == "affine":
        c0, ct, cx = (float(entry.get(k, 0.0)) for k in ("c0", "ct", "cx"))
        return Coefficient(lambda x0, x1: c0 + ct * x0 + cx * x1,
                           label=f"affine({c0:g},{ct:g},{cx:g})")
    if preset == "sinusoidal":
        base = float(entry.get("base", 1.0))
        amp = float(entry.get("amp", 0.0))
        omega = float(entry.get("omega", 1.0))
        phase = float(entry.get("phase", 0.0))
        times_x1 = bool(entry.get("times_x1", False))

        def f(x0, x1):
            s = amp * np.sin(omega * x0 + phase)
            return base + (s * x1 if times_x1 else s + 0.0 * x1)

        return Coefficient(f, label=f"sinusoidal({base:g},{amp:g},{omega:g})")
    if preset == "sine_mode":
        amp = float(entry.get("amp", 1.0))
        growth = float(entry.get("growth", 0.0))
        k = float(entry.get("k", 1.0))
        lo = float(entry["lo"])
        hi = float(entry["hi"])
        return Coefficient(
            lambda x0, x1: amp * np.exp(growth * x0) * np.sin(k * np.pi * (x1 - lo) / (hi - lo)),
            label=f"sine_mode({amp:g},{k:g})")
    raise ConfigError(f"unknown coefficient preset {preset!r}")


def make_time_function(entry: Any) -> Callable[[np.ndarray], np.ndarray]:
    """Interface source ``r(x0)``: number, callable, or preset ``sin``/``pulse``."""
    if entry is None:
        entry = 0.0
    if isinstance(entry, (int, float)):
        value = float(entry)
        return lambda x0: np.full(np.shape(x0), value)
    if callable(entry):
        return entry
    preset = entry.get("preset") if isinstance(entry, Mapping) else None
    if preset == "sin":
        amp = float(entry.get("amp", 1.0))
        omega = float(entry.get("omega", 1.0))
        phase = float(entry.get("phase", 0.0))
        return lambda x0: amp * np.sin(omega * np.asarray(x0, dtype=float) + phase)
    if preset == "pulse":
        amp = float(entry.get("amp", 1.0))
        center = float(entry["center"])
        width = float(entry.get("width", 0.1))
        return lambda x0: amp * np.exp(-((np.asarray(x0, dtype=float) - center) / width) ** 2)
    raise ConfigError(f"unrecognised interface source entry: {entry!r}")


def make_space_function(entry: Any, geometry: Geometry) -> Callable[[np.ndarray], np.ndarray]:
    """Initial state ``w0(x1)``: number, callable, or preset ``sine``/``bump``."""
    if entry is None:
        entry = 0.0
    if isinstance(entry, (int, float)):
        value = float(entry)
        return lambda x1: np.full(np.shape(x1), value)
    if callable(entry):
        return entry
    preset = entry.get("preset") if isinstance(entry, Mapping) else None
    a, b = geometry.a, geometry.b
    if preset == "sine":
        amp = float(entry.get("amp", 1.0))
        k = int(entry.get("k", 1))
        return lambda x1: amp * np.sin(k * np.pi * (np.asarray(x1, dtype=float) - a) / (b - a))
    if preset == "bump":
        amp = float(entry.get("amp", 1.0))
        lo = float(entry.get("lo", a))
        hi = float(entry.get("hi", b))

        def bump(x1):
            x1 = np.asarray(x1, dtype=float)
            s = np.clip((x1 - lo) / (hi - lo), 0.0, 1.0)
            return amp * (np.sin(np.pi * s) ** 2)

        return bump
    raise ConfigError(f"unrecognised initial state entry: {entry!r}")


@dataclass(frozen=True)
class CoefficientSet:
    rho_plus: Coefficient
    a_plus: Coefficient
    b_plus: Coefficient
    c_plus: Coefficient
    rho_minus: Coefficient
    a_minus: Coefficient
    b_minus: Coefficient
    c_minus: Coefficient
    alpha: float

    @classmethod
    def constant(cls, rho=1.0, a=1.0, b=0.0, c=0.0, alpha=None):
        alpha = min(rho, a) if alpha is None else alpha
        return cls(_const(rho), _const(a), _const(b), _const(c),
                   _const(rho), _const(a), _const(b), _const(c), float(alpha))

    def side(self, plus: bool):
        if plus:
            return self.rho_plus, self.a_plus, self.b_plus, self.c_plus
        return self.rho_minus, self.a_minus, self.b_minus, self.c_minus

    def sampled_minima(self, geometry: Geometry, n: int = SAMPLES_PER_AXIS) -> dict[str, float]:
        t = np.linspace(0.0, geometry.T, n)
        plus = np.linspace(0.0, geometry.b, n)
        minus = np.linspace(geometry.a, 0.0, n)
        out = {}
        for name, xs in (("plus", plus), ("minus", minus)):
            X0, X1 = np.meshgrid(t, xs, indexing="ij")
            rho, a, _, _ = self.side(name == "plus")
            out[f"rho_{name}"] = float(np.min(rho(X0, X1)))
            out[f"a_{name}"] = float(np.min(a(X0, X1)))
        return out

    def sampled_max_abs(self, geometry: Geometry, n: int = SAMPLES_PER_AXIS) -> dict[str, float]:
        t = np.linspace(0.0, geometry.T, n)
        out = {"b": 0.0, "c": 0.0}
        for plus, xs in ((True, np.linspace(0.0, geometry.b, n)),
                         (False, np.linspace(geometry.a, 0.0, n))):
            X0, X1 = np.meshgrid(t, xs, indexing="ij")
            _, _, b, c = self.side(plus)
            out["b"] = max(out["b"], float(np.max(np.abs(b(X0, X1)))))
            out["c"] = max(out["c"], float(np.max(np.abs(c(X0, X1)))))
        return out


@dataclass(frozen=True)
class Nonlinearity:
    """``g(x, xi1, xi2)`` with analytic partials; all callables vectorised."""

    g: Callable
    dg_dxi1: Callable
    dg_dxi2: Callable
    p1: float = 1.0
    p2: float = 1.0
    p3: float = 1.0
    name: str = "custom"


def burgers(scale: float = 1.0) -> Nonlinearity:
    s = float(scale)
    return Nonlinearity(
        g=lambda x0, x1, xi1, xi2: s * xi1 * xi2,
        dg_dxi1=lambda x0, x1, xi1, xi2: s * xi2 + 0.0 * xi1,
        dg_dxi2=lambda x0, x1, xi1, xi2: s * xi1 + 0.0 * xi2,
        p1=1.0, p2=1.0, p3=1.0, name="burgers" if s == 1.0 else f"burgers({s:g})",
    )


def _sine_nonlinearity(scale: float = 1.0) -> Nonlinearity:
    s = float(scale)
    return Nonlinearity(
        g=lambda x0, x1, xi1, xi2: s * np.sin(xi1) + 0.0 * xi2,
        dg_dxi1=lambda x0, x1, xi1, xi2: s * np.cos(xi1) + 0.0 * xi2,
        dg_dxi2=lambda x0, x1, xi1, xi2: 0.0 * xi1 * xi2,
        p1=1.0, p2=1.0, p3=1.0, name=f"sine({s:g})",
    )


def _quadratic_nonlinearity(scale: float = 1.0) -> Nonlinearity:
    s = float(scale)
    return Nonlinearity(
        g=lambda x0, x1, xi1, xi2: s * xi1 * xi1 + 0.0 * xi2,
        dg_dxi1=lambda x0, x1, xi1, xi2: 2.0 * s * xi1 + 0.0 * xi2,
        dg_dxi2=lambda x0, x1, xi1, xi2: 0.0 * xi1 * xi2,
        p1=2.0, p2=2.0, p3=1.0, name=f"quadratic({s:g})",
    )


NONLINEARITY_PRESETS = {
    "burgers": burgers,
    "sine": _sine_nonlinearity,
    "quadratic": _quadratic_nonlinearity,
}


def make_nonlinearity(entry: Any) -> Nonlinearity | None:
    if entry is None or entry == "none":
        return None
    if isinstance(entry, Nonlinearity):
        return entry
    if isinstance(entry, str):
        entry = {"preset": entry}
    preset = entry.get("preset")
    if preset not in NONLINEARITY_PRESETS:
        raise ConfigError(f"unknown nonlinearity preset {preset!r}")
    return NONLINEARITY_PRESETS[preset](float(entry.get("scale", 1.0)))


def eval_nonlinearity(n: Nonlinearity, x, xi1, xi2):
    """Return ``(g, dg/dxi1, dg/dxi2)`` at ``x = (x0, x1)``.

    Raises ``FloatingPointError`` if any output is non-finite.
    """
    x0, x1 = x
    vals = tuple(np.asarray(fn(x0, x1, xi1, xi2), dtype=float)
                 for fn in (n.g, n.dg_dxi1, n.dg_dxi2))
    for v in vals:
        if not np.all(np.isfinite(v)):
            raise FloatingPointError(f"nonlinearity {n.name!r} produced non-finite values")
    if all(v.ndim == 0 for v in vals):
        return tuple(float(v) for v in vals)
    return vals


def _zero_source(x0, x1):
    return np.zeros(np.broadcast(x0, x1).shape)


@dataclass(frozen=True)
class ProblemSpec:
    geometry: Geometry
    coefficients: CoefficientSet
    M: float
    nonlinearity: Nonlinearity | None = None
    f_plus: Callable = _zero_source
    f_minus: Callable = _zero_source
    r: Callable = field(default=lambda x0: np.zeros(np.shape(x0)))
    w0: Callable = field(default=lambda x1: np.zeros(np.shape(x1)))
    raw_flux: bool = False

    def __post_init__(self):
        validate_problem(self)

    def with_data(self, **changes) -> "ProblemSpec":
        return replace(self, **changes)

    def source(self, x0, x1):
        """Bulk source ``f``: ``f_plus`` for ``x1 > 0``, ``f_minus`` for ``x1 < 0``."""
        x0, x1 = np.broadcast_arrays(np.asarray(x0, float), np.asarray(x1, float))
        return np.where(x1 > 0, self.f_plus(x0, x1), self.f_minus(x0, x1))


def validate_problem(spec: ProblemSpec, n: int = SAMPLES_PER_AXIS) -> None:
    g = spec.geometry
    if not (spec.M > 0):
        raise ConfigError(f"mass must be positive, got M={spec.M}")
    alpha = spec.coefficients.alpha
    if not alpha > 0:
        raise ConfigError(f"alpha must be positive, got {alpha}")
    for name, value in spec.coefficients.sampled_minima(g, n).items():
        if not np.isfinite(value) or value < alpha:
            raise ConfigError(f"coefficient {name} has sampled minimum {value:.6g} below alpha={alpha:g}")
    ends = np.asarray(spec.w0(np.array([g.a, g.b])), dtype=float)
    scale = max(1.0, float(np.max(np.abs(spec.w0(np.linspace(g.a, g.b, n))))))
    if np.any(np.abs(ends) > 1e-12 * scale):
        raise ConfigError(f"initial state must vanish at a and b, got w0(a)={ends[0]:.3g}, w0(b)={ends[1]:.3g}")
    if spec.nonlinearity is not None:
        xs = np.linspace(g.a, g.b, n)
        ts = np.linspace(0.0, g.T, n)
        X0, X1 = np.meshgrid(ts, xs, indexing="ij")
        zero = np.zeros_like(X0)
        eval_nonlinearity(spec.nonlinearity, (X0, X1), zero, zero)


def _require(raw: Mapping, key: str, where: str):
    if key not in raw:
        raise ConfigError(f"missing required field '{where}{key}'")
    return raw[key]


def build_problem(raw: Mapping) -> ProblemSpec:
    """Validate a configuration mapping (parsed JSON) and return a ProblemSpec.

    Minimal document::

        {"geometry": {"a": -1, "b": 1, "d": 0.5, "T": 1},
         "coefficients": {"rho": 1, "a": 1, "b": 0, "c": 0},
         "M": 1,
         "data": {"f_plus": 0, "f_minus": 0, "r": 0, "w0": 0}}

    Per-side keys (``rho_plus``, ``a_minus``, ...) override the shared ones.
    """
    geo_raw = _require(raw, "geometry", "")
    try:
        geometry = Geometry(*(float(_require(geo_raw, k, "geometry.")) for k in ("a", "b", "d", "T")))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid geometry: {exc}") from exc
    coef_raw = dict(raw.get("coefficients", {}))
    defaults = {"rho": 1.0, "a": 1.0, "b": 0.0, "c": 0.0}
    coefs = {}
    for name, default in defaults.items():
        shared = coef_raw.get(name, default)
        for side in ("plus", "minus"):
            coefs[f"{name}_{side}"] = make_coefficient(coef_raw.get(f"{name}_{side}", shared))
    if "alpha" in coef_raw:
        alpha = float(coef_raw["alpha"])
    else:
        mins = CoefficientSet(alpha=1.0, **coefs).sampled_minima(geometry)
        alpha = min(mins.values())
    coefficients = CoefficientSet(alpha=alpha, **coefs)
    M = _require(raw, "M", "")
    try:
        M = float(M)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field 'M' must be a number, got {M!r}") from exc
    data = raw.get("data", {})
    return ProblemSpec(
        geometry=geometry,
        coefficients=coefficients,
        M=M,
        nonlinearity=make_nonlinearity(raw.get("nonlinearity")),
        f_plus=make_coefficient(data.get("f_plus", 0.0)),
        f_minus=make_coefficient(data.get("f_minus", 0.0)),
        r=make_time_function(data.get("r", 0.0)),
        w0=make_space_function(data.get("w0", 0.0), geometry),
        raw_flux=bool(raw.get("raw_flux", False)),
    )


def default_problem(**overrides) -> ProblemSpec:
    """Constant-coefficient desk problem on (-1, 1) with omega = (0.5, 1)."""
    geometry = overrides.pop("geometry", Geometry(-1.0, 1.0, 0.5, 1.0))
    coefficients = overrides.pop("coefficients", CoefficientSet.constant())
    M = overrides.pop("M", 1.0)
    return ProblemSpec(geometry=geometry, coefficients=coefficients, M=M, **overrides)


def sine_initial_state(geometry: Geometry, k: int = 1, amp: float = 1.0):
    a, b = geometry.a, geometry.b
    return lambda x1: amp * np.sin(k * math.pi * (np.asarray(x1, dtype=float) - a) / (b - a))
