"""Seeded driving system: two-sided symbol sequences over a finite alphabet.

A realization is a window of map indices around the origin; the shift acts by
relabeling indices, so the same realized randomness backs every fiber of one
experiment.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, WindowExhaustedError

_MASK64 = 0xFFFFFFFFFFFFFFFF


def _fnv1a64(tag: str) -> int:
    h = 0xCBF29CE484222325
    for b in tag.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & _MASK64
    return h


def splitmix64(z: int) -> int:
    """One splitmix64 output step (the documented 64-bit mixing function)."""
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_seed(master_seed: int, stream_tag: str) -> int:
    """Derived seed = splitmix64(master_seed XOR fnv1a64(stream_tag)).

    Gives reproducible, independent streams for parallel fan-out.
    """
    return splitmix64((master_seed & _MASK64) ^ _fnv1a64(stream_tag))


def _check_prob_vector(p, what):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ConfigurationError(f"{what} must be a probability vector summing to 1")
    return p


def _is_irreducible(P: np.ndarray) -> bool:
    """Reachability closure over the support graph of P."""
    n = P.shape[0]
    reach = P > 0
    np.fill_diagonal(reach, True)
    for _ in range(n):
        reach = reach | (reach @ reach)
    return bool(reach.all())


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """Stationary row vector of a row-stochastic irreducible matrix."""
    n = P.shape[0]
    A = np.vstack([P.T - np.eye(n), np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


@dataclass(frozen=True)
class BaseSystem:
    """Ergodic driving system over a finite alphabet of maps."""

    alphabet_size: int
    mode: str = "iid"  # "iid" | "markov"
    weights: np.ndarray | None = None
    transition: np.ndarray | None = None
    master_seed: int = 0

    def __post_init__(self):
        if self.alphabet_size < 1:
            raise ConfigurationError("alphabet_size must be positive")
        if self.mode not in ("iid", "markov"):
            raise ConfigurationError(f"unknown base mode {self.mode!r}")
        if self.mode == "iid":
            w = self.weights
            if w is None:
                w = np.full(self.alphabet_size, 1.0 / self.alphabet_size)
            w = _check_prob_vector(w, "base.weights")
            if len(w) != self.alphabet_size:
                raise ConfigurationError("weights length must equal alphabet_size")
            object.__setattr__(self, "weights", w)
        else:
            P = np.asarray(self.transition, dtype=float)
            if P.shape != (self.alphabet_size, self.alphabet_size):
                raise ConfigurationError("transition must be alphabet_size x alphabet_size")
            for i in range(self.alphabet_size):
                _check_prob_vector(P[i], f"transition row {i}")
            if not _is_irreducible(P):
                raise ConfigurationError("transition matrix is not irreducible")
            object.__setattr__(self, "transition", P)

    def stationary(self) -> np.ndarray:
        if self.mode == "iid":
            return self.weights
        return stationary_distribution(self.transition)


@dataclass(frozen=True)
class OmegaPath:
    """Realized two-sided window of the driving sequence.

    Index 0 is the current fiber; negative indices are the past. The symbol
    array is immutable and shared by shifted views.
    """

    symbols: np.ndarray
    origin: int
    alphabet_size: int

    def __post_init__(self):
        self.symbols.setflags(write=False)

    @property
    def n_back(self) -> int:
        return self.origin

    @property
    def n_fwd(self) -> int:
        return len(self.symbols) - 1 - self.origin

    def symbol_at(self, j: int) -> int:
        if j < -self.n_back or j > self.n_fwd:
            raise WindowExhaustedError(
                f"index {j} outside realized window [{-self.n_back}, {self.n_fwd}]; "
                "regenerate the path with a larger window"
            )
        return int(self.symbols[self.origin + j])

    def shift(self, k: int) -> "OmegaPath":
        new_origin = self.origin + k
        if not 0 <= new_origin < len(self.symbols):
            raise WindowExhaustedError(
                f"shift by {k} leaves the realized window; "
                "regenerate the path with a larger window"
            )
        return OmegaPath(self.symbols, new_origin, self.alphabet_size)

    def __eq__(self, other):
        return (
            isinstance(other, OmegaPath)
            and self.origin == other.origin
            and self.alphabet_size == other.alphabet_size
            and np.array_equal(self.symbols, other.symbols)
        )


def _markov_chain(rng, start, P, length):
    out = np.empty(length, dtype=np.int64)
    if length == 0:
        return out
    cums = np.cumsum(P, axis=1)
    u = rng.random(length)
    state = start
    for k in range(length):
        state = int(np.searchsorted(cums[state], u[k], side="right"))
        out[k] = state
    return out


def sample_path(sys: BaseSystem, n_back: int, n_fwd: int) -> OmegaPath:
    """Draw one quenched realization on the window [-n_back, n_fwd].

    Deterministic in (master_seed, window): the origin, forward and backward
    segments come from independent derived streams, so enlarging the window
    extends the same realization.
    """
    if n_back < 0 or n_fwd < 0:
        raise ConfigurationError("window extents must be nonnegative")
    rng_origin = np.random.default_rng(derive_seed(sys.master_seed, "origin"))
    rng_fwd = np.random.default_rng(derive_seed(sys.master_seed, "fwd"))
    rng_bwd = np.random.default_rng(derive_seed(sys.master_seed, "bwd"))

    if sys.mode == "iid":
        w = sys.weights
        origin = int(rng_origin.choice(sys.alphabet_size, p=w))
        cw = np.cumsum(w)
        fwd = np.searchsorted(cw, rng_fwd.random(n_fwd), side="right")
        bwd = np.searchsorted(cw, rng_bwd.random(n_back), side="right")
    else:
        pi = sys.stationary()
        origin = int(rng_origin.choice(sys.alphabet_size, p=pi))
        fwd = _markov_chain(rng_fwd, origin, sys.transition, n_fwd)
        # backward extension by the time-reversed chain w.r.t. the
        # stationary vector, preserving invertibility of the shift
        P_rev = (sys.transition.T * pi[None, :]) / pi[:, None]
        P_rev /= P_rev.sum(axis=1, keepdims=True)
        bwd = _markov_chain(rng_bwd, origin, P_rev, n_back)

    symbols = np.concatenate([bwd[::-1], [origin], fwd]).astype(np.int64)
    return OmegaPath(symbols, n_back, sys.alphabet_size)
