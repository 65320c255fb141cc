"""Per-symbol observables with fiberwise centering and K-rescaling."""

from dataclasses import dataclass, replace

import numpy as np

from .density import midpoints
from .errors import UsageError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Observable:
    """Closed-form observable per alphabet symbol.

    The working observable at fiber j is scale(j) * (psi_{symbol(j)} - offset(j)).
    Offsets come from fiberwise centering against the equivariant density,
    scales from the adapted-norm rescaling 1/K^2.
    """

    name: str
    funcs: tuple  # vectorized callables, one per symbol
    bv_bounds: tuple  # BV norm of each raw psi_i
    offset_base: int = 0
    offsets: np.ndarray | None = None
    scale_base: int = 0
    scales: np.ndarray | None = None

    def _lookup(self, base, arr, j, default):
        if arr is None:
            return default
        i = j - base
        if not 0 <= i < len(arr):
            raise UsageError(
                f"fiber {j} outside the range [{base}, {base + len(arr)}) where "
                f"observable '{self.name}' constants were computed"
            )
        return float(arr[i])

    def offset(self, j: int) -> float:
        return self._lookup(self.offset_base, self.offsets, j, 0.0)

    def scale(self, j: int) -> float:
        if self.scales is None:
            return 1.0
        # edge-hold outside the window where K was estimated
        i = min(max(j - self.scale_base, 0), len(self.scales) - 1)
        return float(self.scales[i])

    def values(self, j: int, sym: int, x) -> np.ndarray:
        """Working observable at fiber j evaluated at points x."""
        return self.scale(j) * (np.asarray(self.funcs[sym](x), dtype=float) - self.offset(j))

    def fiber_bv_bound(self, j: int, sym: int) -> float:
        # |constant shift| only enters through the L1 part
        return self.scale(j) * (self.bv_bounds[sym] + abs(self.offset(j)))

    def with_offsets(self, base: int, offsets: np.ndarray) -> "Observable":
        return replace(self, offset_base=base, offsets=np.asarray(offsets, dtype=float))

    def with_scales(self, base: int, scales: np.ndarray) -> "Observable":
        return replace(self, scale_base=base, scales=np.asarray(scales, dtype=float))


def _bv_quadrature(f, panels: int = 1 << 14) -> float:
    x = midpoints(panels)
    v = np.asarray(f(x), dtype=float)
    return float(np.mean(np.abs(v)) + np.sum(np.abs(np.roll(v, -1) - v)))


def _constant_family(f, n_symbols, name, params=None):
    funcs = tuple([f] * n_symbols)
    bv = _bv_quadrature(f)
    return Observable(name, funcs, tuple([bv] * n_symbols))


def make_observable(name: str, n_symbols: int, params: dict | None = None) -> Observable:
    """Registry of shipped observables (same closed form on every symbol)."""
    params = params or {}
    if name == "cos":
        freq = float(params.get("freq", 1.0))
        f = lambda x: np.cos(TWO_PI * freq * np.asarray(x, dtype=float))
        return _constant_family(f, n_symbols, name)
    if name == "sawtooth":
        f = lambda x: np.asarray(x, dtype=float) - 0.5
        return _constant_family(f, n_symbols, name)
    if name == "indicator-step":
        # the lattice-valued observable: +1 on [0,1/2), -1 on [1/2,1)
        f = lambda x: np.where(np.asarray(x, dtype=float) < 0.5, 1.0, -1.0)
        return _constant_family(f, n_symbols, name)
    if name == "custom-polynomial":
        coeffs = tuple(float(c) for c in params.get("coeffs", [0.0, 1.0]))
        f = lambda x: np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), coeffs)
        return _constant_family(f, n_symbols, name)
    raise UsageError(f"unknown observable {name!r}")
