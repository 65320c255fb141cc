"""Piecewise-constant densities on a uniform grid of the circle [0,1)."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, UsageError


def _check_resolution(n: int):
    if n < 8 or n & (n - 1):
        raise ConfigurationError(f"grid resolution must be a power of two >= 8, got {n}")


def midpoints(N: int) -> np.ndarray:
    return (np.arange(N) + 0.5) / N


@dataclass(frozen=True)
class GridDensity:
    """Values per grid cell; complex-valued in general, cell width 1/N."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        _check_resolution(len(v))
        if not np.all(np.isfinite(v.view(float) if np.iscomplexobj(v) else v)):
            raise UsageError("density values must be finite")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def resolution(self) -> int:
        return len(self.values)

    def integral(self):
        s = self.values.mean()
        return complex(s) if np.iscomplexobj(self.values) else float(s)

    def l1_norm(self) -> float:
        return float(np.mean(np.abs(self.values)))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def variation(self) -> float:
        # circle convention: the wrap-around jump counts
        return float(np.sum(np.abs(np.roll(self.values, -1) - self.values)))

    def bv_norm(self) -> float:
        return self.l1_norm() + self.variation()

    @staticmethod
    def uniform(N: int) -> "GridDensity":
        _check_resolution(N)
        return GridDensity(np.ones(N))

    @staticmethod
    def from_function(f, N: int) -> "GridDensity":
        _check_resolution(N)
        return GridDensity(np.asarray(f(midpoints(N))))

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("index,real,imag\n")
            for i, v in enumerate(self.values):
                z = complex(v)
                fh.write(f"{i},{z.real:.17g},{z.imag:.17g}\n")
