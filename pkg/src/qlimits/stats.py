"""Birkhoff-sum Monte Carlo, variance estimators, and the CLT / LDP / LCLT
validation harnesses.

Trajectories always use exact map iteration, never the Ulam matrix, so
operator-vs-MC agreement is a genuine two-sided check.
"""

from dataclasses import dataclass

import numpy as np

from .base import derive_seed
from .density import GridDensity, midpoints
from .errors import AperiodicityError, ConvexityError, DegeneracyError, UsageError
from .spectral import (AdaptedNormData, AperiodicityResult, DecayFit,
                       autocovariance_series, decay_estimate, default_probe,
                       fiber_densities)
from .ulam import TwistedCocycle


@dataclass(frozen=True)
class BirkhoffSample:
    n: int
    M: int
    values: np.ndarray  # M realized Birkhoff sums S_n
    sampling_seed: int

    def __post_init__(self):
        self.values.setflags(write=False)


@dataclass(frozen=True)
class VarianceReport:
    sigma2_series: float | None
    sigma2_mc: float
    sigma2_mc_stderr: float
    sigma2_fd: float | None
    tail_bound: float | None
    h_max: int
    note: str = ""


def center(obs, path, cocycle: TwistedCocycle, j_lo: int, j_hi: int,
           depth: int = 64):
    """Fiberwise centering against the equivariant densities on [j_lo, j_hi)."""
    shifted = path.shift(j_lo)
    vs = fiber_densities(shifted, cocycle, depth, j_hi - j_lo - 1)
    mids = midpoints(cocycle.N)
    offsets = np.empty(j_hi - j_lo)
    for i in range(j_hi - j_lo):
        sym = path.symbol_at(j_lo + i)
        g = np.asarray(obs.funcs[sym](mids), dtype=float)
        offsets[i] = float(np.mean(g * vs[i].values.real))
    return obs.with_offsets(j_lo, offsets)


def scale_by_K(obs, adapted: AdaptedNormData, base_fiber: int = 0):
    """Per-fiber multiplication by 1/K^2; records the manifest boundedness
    constant sup_j K_j^2 ||psi_K||_BV (equal to the raw BV bound)."""
    if np.any(adapted.K < 1.0):
        raise UsageError("adapted K must be >= 1 per fiber")
    return obs.with_scales(base_fiber, 1.0 / adapted.K**2)


def centering_residuals(obs, path, cocycle, n_fibers, depth=64):
    vs = fiber_densities(path, cocycle, depth, n_fibers - 1)
    mids = midpoints(cocycle.N)
    out = np.empty(n_fibers)
    for j in range(n_fibers):
        g = obs.values(j, path.symbol_at(j), mids)
        out[j] = abs(float(np.mean(g * vs[j].values.real)))
    return out


def sample_initial_points(v0: GridDensity, M: int, rng) -> np.ndarray:
    """Inverse-CDF sampling of a grid density: cell by the cumulative mass,
    uniform position within the selected cell."""
    p = np.maximum(v0.values.real, 0.0)
    p = p / p.sum()
    cum = np.cumsum(p)
    cum[-1] = 1.0
    u = rng.random(M)
    idx = np.searchsorted(cum, u, side="right")
    lo = np.where(idx > 0, cum[idx - 1], 0.0)
    frac = (u - lo) / np.maximum(p[idx], 1e-300)
    return (idx + np.clip(frac, 0.0, np.nextafter(1.0, 0.0))) / v0.resolution


def birkhoff_sample(path, family, obs, n: int, M: int, seed: int,
                    v0: GridDensity) -> BirkhoffSample:
    """M Birkhoff sums of length n from initial points drawn from v0,
    accumulated with compensated summation."""
    rng = np.random.default_rng(derive_seed(seed, "birkhoff"))
    x = sample_initial_points(v0, M, rng)
    s = np.zeros(M)
    comp = np.zeros(M)
    for k in range(n):
        sym = path.symbol_at(k)
        term = obs.values(k, sym, x)
        # Kahan step
        y = term - comp
        t = s + y
        comp = (t - s) - y
        s = t
        x = family[sym].eval(x)
        # one-ulp dither: integer-slope maps shift mantissa bits out, so a
        # bare float orbit of e.g. the doubling map collapses to the fixed
        # point 0 after 53 steps; refill the low bit with fresh randomness
        x = (x + rng.random(M) * 2.0**-52) % 1.0
    return BirkhoffSample(n, M, s, seed)


def variance(path, family, cocycle: TwistedCocycle, obs, h_max: int = 30,
             n_fibers: int = 256, depth: int = 64,
             decay: DecayFit | None = None,
             mc: BirkhoffSample | None = None,
             fd: dict | None = None) -> VarianceReport:
    """Three-way variance report: truncated series, Monte Carlo second moment,
    and (optionally precomputed) finite-difference Lambda''(0)."""
    if decay is None:
        decay = decay_estimate(path, cocycle, default_probe(cocycle.N),
                               max(2 * h_max, 30), depth)

    note = ""
    if decay.rho_hat >= 1.0:
        sigma2_series, tail = None, None
        note = "series refused: no decay certificate (rho_hat >= 1)"
    else:
        terms, bvs = autocovariance_series(path, cocycle, obs, n_fibers, h_max, depth)
        sigma2_series = float(np.mean(terms))
        B = float(np.max(bvs))
        rho = decay.rho_hat
        tail = 2.0 * B**2 * decay.Z_hat * rho ** (h_max + 1) / (1.0 - rho)

    if mc is None:
        v0 = fiber_densities(path, cocycle, depth, 0)[0]
        mc = birkhoff_sample(path, family, obs, 2000, 20_000, 1234, v0)
    sq = mc.values**2 / mc.n
    sigma2_mc = float(np.mean(sq))
    # delete-one jackknife of the mean reduces to the usual stderr
    stderr = float(np.std(sq, ddof=1) / np.sqrt(mc.M))
    sigma2_fd = None if fd is None else float(fd["lambda2_fd"])
    return VarianceReport(sigma2_series, sigma2_mc, stderr, sigma2_fd, tail, h_max, note)


def ks_distance(values: np.ndarray, cdf) -> float:
    v = np.sort(np.asarray(values, dtype=float))
    M = len(v)
    c = cdf(v)
    upper = np.arange(1, M + 1) / M - c
    lower = c - np.arange(0, M) / M
    return float(max(upper.max(), lower.max()))


def _normal_cdf(sigma2: float):
    from scipy.special import ndtr
    s = np.sqrt(sigma2)
    return lambda x: ndtr(np.asarray(x) / s)


def clt_test(sample: BirkhoffSample, sigma2: float, threshold: float = 0.02) -> dict:
    """KS distance of S_n/sqrt(n) against N(0, sigma2)."""
    if sigma2 <= 0.0:
        raise DegeneracyError("CLT test requires sigma2 > 0")
    scaled = sample.values / np.sqrt(sample.n)
    d = ks_distance(scaled, _normal_cdf(sigma2))
    return {"ks_distance": d, "pass": d < threshold, "threshold": threshold}


def ldp_rate(curve, eps_grid) -> list:
    """Discrete Legendre transform of the Lyapunov curve.

    `curve` is the lambda_curve output on a symmetric theta grid; the grid
    must be convex up to 3x the statistical error.
    """
    thetas = np.array([c["theta"].real for c in curve])
    Lams = np.array([c["Lambda"] for c in curve])
    errs = np.array([c["stderr"] for c in curve])
    order = np.argsort(thetas)
    thetas, Lams, errs = thetas[order], Lams[order], errs[order]
    if len(thetas) >= 3:
        second = np.diff(Lams, 2)
        tol = 3.0 * float(np.max(errs))
        if np.any(second < -tol):
            raise ConvexityError(
                "Lambda not convex on the theta grid beyond tolerance; "
                "use a smaller theta window")
    out = []
    for eps in eps_grid:
        c = float(np.max(thetas * eps - Lams))
        if eps == 0.0:
            c = max(c, 0.0)
        out.append({"eps": float(eps), "c": c})
    return out


def wilson_interval(k: int, M: int, z: float = 1.96):
    if M == 0:
        return (0.0, 1.0)
    p = k / M
    denom = 1.0 + z**2 / M
    mid = (p + z**2 / (2 * M)) / denom
    half = z * np.sqrt(p * (1 - p) / M + z**2 / (4 * M**2)) / denom
    return (max(mid - half, 0.0), min(mid + half, 1.0))


def ldp_empirical(path, family, obs, n_list, M: int, eps_grid, seed: int,
                  v0: GridDensity, min_tail: int = 30) -> list:
    """Empirical quenched tail rates -(1/n) log freq(S_n > n eps).

    Rows with tail count below min_tail are censored (rate None)."""
    rows = []
    for n in n_list:
        sample = birkhoff_sample(path, family, obs, n, M, seed + n, v0)
        for eps in eps_grid:
            k = int(np.sum(sample.values > n * eps))
            lo, hi = wilson_interval(k, M)
            freq = k / M
            rate = -np.log(freq) / n if k >= min_tail else None
            rows.append({
                "n": n, "eps": float(eps), "count": k, "freq": freq,
                "rate": rate, "wilson_lo": lo, "wilson_hi": hi,
                "censored": k < min_tail,
            })
    return rows


def lclt_test(path, family, obs, sigma2: float, n_list, M: int, J, s_grid,
              seed: int, v0: GridDensity,
              aperiodicity: AperiodicityResult | None = None) -> list:
    """Scaled interval frequencies against the Gaussian kernel, per horizon.

    Refuses to run without an aperiodicity certificate (the lattice-valued
    negative control is the diagnostic to consult)."""
    if sigma2 <= 0.0:
        raise DegeneracyError("LCLT test requires sigma2 > 0")
    if aperiodicity is None or not aperiodicity.aperiodic:
        raise AperiodicityError(
            "aperiodicity not certified on the configured t grid; see the "
            "lattice counterexample diagnostic (aperiodicity_check)")
    a, b = float(J[0]), float(J[1])
    sig = np.sqrt(sigma2)
    out = []
    for n in n_list:
        sample = birkhoff_sample(path, family, obs, n, M, seed + n, v0)
        devs, errs = [], []
        for s in s_grid:
            freq = float(np.mean((sample.values >= a - s) & (sample.values < b - s)))
            stat = sig * np.sqrt(n) * freq
            target = (b - a) / np.sqrt(2.0 * np.pi) * np.exp(-s**2 / (2.0 * n * sigma2))
            devs.append(abs(stat - target))
            errs.append(sig * np.sqrt(n) * np.sqrt(max(freq * (1 - freq), 1e-12) / M))
        i = int(np.argmax(devs))
        out.append({"n": n, "sup_deviation": float(devs[i]), "stderr": float(errs[i])})
    return out


def char_fn_check(path, family, cocycle: TwistedCocycle, obs, sigma2: float,
                  t_grid, n: int, M: int, seed: int, v0: GridDensity,
                  depth: int = 64) -> list:
    """Characteristic-function bridge: twisted-operator integral vs Monte
    Carlo average of exp(i t S_n / sqrt n) vs the Gaussian limit."""
    sample = birkhoff_sample(path, family, obs, n, M, seed, v0)
    rows = []
    for t in t_grid:
        theta = 1j * float(t) / np.sqrt(n)
        u = GridDensity(v0.values.astype(complex))
        for k in range(n):
            u = cocycle.step(path, k, theta, u)
        op_val = complex(u.integral())
        phases = np.exp(1j * float(t) * sample.values / np.sqrt(n))
        mc_val = complex(np.mean(phases))
        mc_err = float(np.std(phases) / np.sqrt(M))
        gauss = float(np.exp(-(t**2) * sigma2 / 2.0))
        rows.append({
            "t": float(t), "operator": op_val, "mc": mc_val, "mc_stderr": mc_err,
            "gaussian": gauss,
            "max_deviation": max(abs(op_val - mc_val), abs(op_val - gauss),
                                 abs(mc_val - gauss)),
        })
    return rows
