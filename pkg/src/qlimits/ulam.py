"""Ulam (indicator-Galerkin) approximation of transfer operators.

Column j of the matrix distributes the mass of grid cell j over the cells its
image intersects, so every column sums to one and integrals are preserved,
mirroring the L1-isometry of the exact operator.
"""

import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .density import GridDensity, _check_resolution, midpoints
from .errors import ConfigurationError, UsageError
from .maps import PiecewiseLinearMap, SmoothCircleMap


@dataclass(frozen=True)
class UlamOperator:
    """Column-stochastic finite approximation of one transfer operator."""

    matrix: sp.csc_matrix  # shape (N, N), entry (i, j) = mass cell j -> cell i

    @property
    def resolution(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class TwistWeight:
    """Cell-midpoint values of exp(theta * psi)."""

    theta: complex
    values: np.ndarray

    @property
    def resolution(self) -> int:
        return len(self.values)


def _distribute(rows, cols, vals, j, u0, u1, mass, N):
    """Spread `mass` from column j over target cells proportionally to the
    overlap of the (unwrapped, increasing) image interval [u0, u1]."""
    span = u1 - u0
    if span <= 0.0:
        return
    m = int(np.floor(u0 * N))
    while m / N < u1 - 1e-18:
        seg = min(u1, (m + 1) / N) - max(u0, m / N)
        if seg > 0.0:
            rows.append(m % N)
            cols.append(j)
            vals.append(mass * seg / span)
        m += 1


def _build_pl(m: PiecewiseLinearMap, N: int):
    rows, cols, vals = [], [], []
    for i in range(m.branch_count):
        a0, a1 = m.breakpoints[i], m.breakpoints[i + 1]
        s, c = m.slopes[i], m.offsets[i]
        j0 = int(np.floor(a0 * N))
        j1 = int(np.ceil(a1 * N))
        for j in range(j0, j1):
            l = max(a0, j / N)
            r = min(a1, (j + 1) / N)
            if r <= l:
                continue
            u, v = s * l + c, s * r + c
            u0, u1 = (u, v) if u <= v else (v, u)
            _distribute(rows, cols, vals, j, u0, u1, (r - l) * N, N)
    return rows, cols, vals


def _build_smooth(m: SmoothCircleMap, N: int):
    b = float(m.lift(0.0))
    bounds = [0.0] + [m.lift_inverse(b + k) for k in range(1, m.degree)] + [1.0]
    rows, cols, vals = [], [], []
    for k in range(m.degree):
        a0, a1 = bounds[k], bounds[k + 1]
        j0 = int(np.floor(a0 * N))
        j1 = int(np.ceil(a1 * N))
        for j in range(j0, j1):
            l = max(a0, j / N)
            r = min(a1, (j + 1) / N)
            if r <= l:
                continue
            span_cells = (float(m.lift(r)) - float(m.lift(l))) * N
            panels = 8 if span_cells > 2.0 else 1
            edges = np.linspace(l, r, panels + 1)
            lifted = np.asarray(m.lift(edges), dtype=float)
            for p in range(panels):
                mass = (edges[p + 1] - edges[p]) * N
                _distribute(rows, cols, vals, j, lifted[p], lifted[p + 1], mass, N)
    return rows, cols, vals


def build_ulam(m, N: int) -> UlamOperator:
    """Exact interval-intersection Ulam matrix for PL maps; monotone
    endpoint evaluation with sub-panel refinement for smooth maps."""
    _check_resolution(N)
    if isinstance(m, PiecewiseLinearMap):
        rows, cols, vals = _build_pl(m, N)
    elif isinstance(m, SmoothCircleMap):
        rows, cols, vals = _build_smooth(m, N)
    else:
        raise ConfigurationError(f"unsupported map type {type(m).__name__}")
    P = sp.coo_matrix((vals, (rows, cols)), shape=(N, N)).tocsc()
    colsum = np.asarray(P.sum(axis=0)).ravel()
    if np.max(np.abs(colsum - 1.0)) > 1e-12:
        raise ConfigurationError("Ulam column sums deviate from 1 beyond 1e-12")
    # scrub last-bit drift so stochasticity is exact
    P = P @ sp.diags(1.0 / colsum)
    return UlamOperator(P.tocsc())


def apply(op: UlamOperator, w, d: GridDensity) -> GridDensity:
    """L^theta d = P (w .* d); w = None gives the untwisted operator."""
    if w is None:
        if op.resolution != d.resolution:
            raise UsageError("operator/density resolution mismatch")
        return GridDensity(op.matrix @ d.values)
    if not op.resolution == w.resolution == d.resolution:
        raise UsageError("operator/weight/density resolution mismatch")
    return GridDensity(op.matrix @ (w.values * d.values))


class TwistedCocycle:
    """Per-symbol Ulam operators and twist weights with idempotent caching.

    Twist weights are keyed by (symbol, theta, offset, scale) where offset and
    scale are the fiber's centering/rescaling constants, so fibers with equal
    constants share cache entries.
    """

    def __init__(self, family, N: int, observable=None):
        _check_resolution(N)
        self.family = family
        self.N = N
        self.observable = observable
        self._ops: dict = {}
        self._weights: dict = {}
        self._psi_grid: dict = {}

    def operator(self, sym: int) -> UlamOperator:
        op = self._ops.get(sym)
        if op is None:
            op = build_ulam(self.family[sym], self.N)
            self._ops[sym] = op  # idempotent insert
        return op

    def _psi_values(self, sym: int) -> np.ndarray:
        v = self._psi_grid.get(sym)
        if v is None:
            v = np.asarray(self.observable.funcs[sym](midpoints(self.N)), dtype=float)
            self._psi_grid[sym] = v
        return v

    def weight(self, sym: int, theta, offset: float = 0.0, scale: float = 1.0) -> TwistWeight:
        if self.observable is None:
            raise UsageError("twisted application requires an observable")
        theta = complex(theta)
        key = (sym, theta, float(offset), float(scale))
        w = self._weights.get(key)
        if w is None:
            psi = scale * (self._psi_values(sym) - offset)
            w = TwistWeight(theta, np.exp(theta * psi))
            self._weights[key] = w
        return w

    def step(self, path, j: int, theta, d: GridDensity) -> GridDensity:
        """One fiber of the (possibly twisted) cocycle at path index j."""
        sym = path.symbol_at(j)
        op = self.operator(sym)
        if theta == 0:
            return apply(op, None, d)
        obs = self.observable
        if obs is None:
            raise UsageError("twisted application requires an observable")
        w = self.weight(sym, theta, obs.offset(j), obs.scale(j))
        return apply(op, w, d)


def compose_apply(path, cocycle: TwistedCocycle, theta, n: int, d: GridDensity) -> GridDensity:
    """Left-to-right n-step composition L_{sigma^{n-1} omega} ... L_omega."""
    for j in range(n):
        d = cocycle.step(path, j, theta, d)
    return d


_MAGIC = b"QLUL"
_VERSION = 1


def save_operator(op: UlamOperator, path, symbol: int = 0, theta=0j):
    """Versioned little-endian dump: header + CSC arrays."""
    P = op.matrix
    theta = complex(theta)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQqdd", _VERSION, P.shape[0], symbol, theta.real, theta.imag))
        fh.write(struct.pack("<QQ", len(P.indptr), len(P.indices)))
        fh.write(P.indptr.astype("<i8").tobytes())
        fh.write(P.indices.astype("<i8").tobytes())
        fh.write(P.data.astype("<f8").tobytes())


def load_operator(path):
    """Inverse of save_operator; returns (UlamOperator, symbol, theta)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise UsageError("not an Ulam operator dump")
        version, N, symbol, tre, tim = struct.unpack("<IQqdd", fh.read(36))
        if version != _VERSION:
            raise UsageError(f"unsupported dump version {version}")
        n_ptr, n_idx = struct.unpack("<QQ", fh.read(16))
        indptr = np.frombuffer(fh.read(8 * n_ptr), dtype="<i8")
        indices = np.frombuffer(fh.read(8 * n_idx), dtype="<i8")
        data = np.frombuffer(fh.read(8 * n_idx), dtype="<f8")
    mat = sp.csc_matrix((data, indices, indptr), shape=(N, N))
    return UlamOperator(mat), symbol, complex(tre, tim)
