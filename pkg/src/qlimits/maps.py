"""Concrete map families on the circle [0,1) with derivatives and
Lasota-Yorke-type constants.

Variation and all grid machinery treat X as the circle, so the wrap-around
jump counts; the unit-interval classics (doubling map) embed unchanged.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .base import BaseSystem
from .errors import ConfigurationError, NumericError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class LYConstants:
    """Deterministic per-map constants of the Lasota-Yorke estimates."""

    lambda_min: float  # essinf |T'|
    distortion: float  # sup |T''| / (T')^2
    c0: float  # 2 max(1/lambda_min, int |T''|/(T')^2 dm)
    branch_count: int


@dataclass(frozen=True)
class PiecewiseLinearMap:
    """Piecewise linear map: branch i sends x to slope_i*x + offset_i mod 1.

    Branches are right-closed at breakpoints: x == a_i belongs to branch i.
    """

    breakpoints: tuple
    slopes: tuple
    offsets: tuple

    def __post_init__(self):
        a = np.asarray(self.breakpoints, dtype=float)
        s = np.asarray(self.slopes, dtype=float)
        c = np.asarray(self.offsets, dtype=float)
        if a[0] != 0.0 or a[-1] != 1.0 or np.any(np.diff(a) <= 0):
            raise ConfigurationError("breakpoints must increase from 0 to 1")
        if len(s) != len(a) - 1 or len(c) != len(s):
            raise ConfigurationError("need one slope and offset per branch")
        if np.any(np.abs(s) < 1e-12):
            raise ConfigurationError("degenerate branch slope")
        object.__setattr__(self, "breakpoints", tuple(a))
        object.__setattr__(self, "slopes", tuple(s))
        object.__setattr__(self, "offsets", tuple(c))

    @property
    def branch_count(self) -> int:
        return len(self.slopes)

    def _branch_index(self, x):
        a = np.asarray(self.breakpoints)
        return np.clip(np.searchsorted(a, x, side="right") - 1, 0, len(self.slopes) - 1)

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        i = self._branch_index(x)
        s = np.asarray(self.slopes)[i]
        c = np.asarray(self.offsets)[i]
        return np.mod(s * x + c, 1.0)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        return np.asarray(self.slopes)[self._branch_index(x)]

    def branch_image(self, i):
        """Unwrapped (pre mod-1) image endpoints of branch i, lo < hi."""
        a0, a1 = self.breakpoints[i], self.breakpoints[i + 1]
        s, c = self.slopes[i], self.offsets[i]
        u, v = s * a0 + c, s * a1 + c
        return (u, v) if u <= v else (v, u)

    def branch_preimages(self, y):
        """All (x, |T'(x)|) with T(x) = y, exact branch-wise inversion."""
        y = float(y)
        out = []
        for i in range(self.branch_count):
            a0, a1 = self.breakpoints[i], self.breakpoints[i + 1]
            s, c = self.slopes[i], self.offsets[i]
            lo, hi = self.branch_image(i)
            k0 = int(np.ceil(lo - y - 1e-12))
            k1 = int(np.floor(hi - y + 1e-12))
            for k in range(k0, k1 + 1):
                x = (y + k - c) / s
                # branches are right-closed at their left breakpoint
                if a0 - 1e-13 <= x < a1:
                    out.append((max(x, a0), abs(s)))
        return out

    def second_deriv_abs_max(self):
        return 0.0


@dataclass(frozen=True)
class SmoothCircleMap:
    """T(x) = degree*x + eps*sin(2 pi x + phase)/(2 pi) mod 1.

    Requires eps < degree so the lift stays monotone; eps > degree - 1 yields
    locally contracting members, admissible if the cocycle is expanding on
    average.
    """

    degree: int
    eps: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.degree < 2:
            raise ConfigurationError("degree must be >= 2")
        if not 0.0 <= self.eps < self.degree:
            raise ConfigurationError("need 0 <= eps < degree for a monotone lift")

    @property
    def branch_count(self) -> int:
        return self.degree

    def lift(self, x):
        x = np.asarray(x, dtype=float)
        return self.degree * x + self.eps * np.sin(TWO_PI * x + self.phase) / TWO_PI

    def eval(self, x):
        return np.mod(self.lift(x), 1.0)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        return self.degree + self.eps * np.cos(TWO_PI * x + self.phase)

    def second_deriv(self, x):
        x = np.asarray(x, dtype=float)
        return -TWO_PI * self.eps * np.sin(TWO_PI * x + self.phase)

    def lift_inverse(self, t):
        """Unique x in [0,1] with lift(x) = t, for t in [lift(0), lift(1)]."""
        lo, hi = float(self.lift(0.0)), float(self.lift(1.0))
        if not lo - 1e-12 <= t <= hi + 1e-12:
            raise NumericError(f"lift inverse target {t} outside [{lo}, {hi}]")
        t = min(max(t, lo), hi)
        try:
            return brentq(lambda x: float(self.lift(x)) - t, 0.0, 1.0, xtol=1e-14, rtol=1e-15)
        except Exception as exc:  # pragma: no cover - solver pathologies
            raise NumericError(f"branch root solve failed for target {t}: {exc}")

    def branch_preimages(self, y):
        y = float(y)
        b = float(self.lift(0.0))
        kmin = int(np.ceil(b - y - 1e-9))
        pts = []
        for k in range(kmin, kmin + self.degree + 2):
            t = y + k
            if t < b - 1e-12 or t > b + self.degree + 1e-12:
                continue
            x = self.lift_inverse(t) % 1.0  # x == 1 is the circle point 0
            if any(min(abs(x - p), 1.0 - abs(x - p)) < 1e-11 for p, _ in pts):
                continue
            pts.append((x, abs(float(self.deriv(x)))))
        return pts

    def second_deriv_abs_max(self):
        return TWO_PI * self.eps


def ly_constants(m, panels: int = 10_000) -> LYConstants:
    """Deterministic LY constants; the integral term by composite midpoint."""
    if isinstance(m, PiecewiseLinearMap):
        lam = float(min(abs(s) for s in m.slopes))
        return LYConstants(lam, 0.0, 2.0 * max(1.0 / lam, 0.0), m.branch_count)
    x = (np.arange(panels) + 0.5) / panels
    d1 = m.deriv(x)
    d2 = np.abs(m.second_deriv(x))
    lam = float(m.degree - m.eps)
    distortion = float(np.max(d2 / d1**2))
    integral = float(np.mean(d2 / d1**2))
    return LYConstants(lam, distortion, 2.0 * max(1.0 / lam, integral), m.branch_count)


@dataclass(frozen=True)
class MapFamily:
    """One map per alphabet symbol."""

    maps: tuple

    def __post_init__(self):
        object.__setattr__(self, "maps", tuple(self.maps))

    def __len__(self):
        return len(self.maps)

    def __getitem__(self, sym):
        return self.maps[sym]


def validate_scenario(family: MapFamily, base: BaseSystem, mc_samples: int = 0) -> dict:
    """Expanding-on-average check from the exact stationary symbol law.

    A failing scenario is reported, never rejected.
    """
    if len(family) != base.alphabet_size:
        raise ConfigurationError("family must assign a map to each alphabet symbol")
    pi = base.stationary()
    constants = [ly_constants(m) for m in family.maps]
    mean_log_lambda = float(sum(p * np.log(c.lambda_min) for p, c in zip(pi, constants)))
    return {
        "expanding_on_average": mean_log_lambda > 0.0,
        "mean_log_lambda": mean_log_lambda,
        "per_map": [
            {
                "lambda_min": c.lambda_min,
                "distortion": c.distortion,
                "c0": c.c0,
                "branch_count": c.branch_count,
            }
            for c in constants
        ],
    }


def doubling_map() -> PiecewiseLinearMap:
    return PiecewiseLinearMap((0.0, 0.5, 1.0), (2.0, 2.0), (0.0, -1.0))


def scaling_map(factor: float) -> PiecewiseLinearMap:
    """x -> factor*x mod 1 with grid-aligned branches (factor a positive integer
    gives the full |factor|-branch expanding map; factor < 1 gives the
    contracting non-onto map x -> factor*x)."""
    if factor >= 1:
        k = int(round(factor))
        if abs(factor - k) > 1e-12:
            raise ConfigurationError("expanding scaling maps need integer factor")
        bps = tuple(np.arange(k + 1) / k)
        return PiecewiseLinearMap(bps, (float(k),) * k, tuple(-float(i) for i in range(k)))
    return PiecewiseLinearMap((0.0, 1.0), (float(factor),), (0.0,))
