"""Equivariant densities, decay fits, twisted eigendata, the Lyapunov
exponent function and its derivatives, adapted-norm diagnostics, and the
aperiodicity check.

Everything here is quenched: one fixed realized path backs all fibers.
"""

from dataclasses import dataclass

import numpy as np

from .base import derive_seed
from .density import GridDensity, midpoints
from .errors import ConfigurationError, DegeneracyError, UsageError
from .ulam import TwistedCocycle, apply, compose_apply

NOISE_FLOOR = 1e-13


@dataclass(frozen=True)
class EquivariantDensity:
    density: GridDensity
    depth: int
    convergence_delta: float  # L1 change under depth halving


@dataclass(frozen=True)
class DecayFit:
    Z_hat: float
    rho_hat: float
    gaps: np.ndarray
    residuals: np.ndarray  # log-gap values entering the fit
    horizon: int
    note: str = ""


@dataclass(frozen=True)
class EigenData:
    theta: complex
    v_theta: GridDensity  # fiber-0 eigen-density, integral 1
    lambdas: np.ndarray  # lambda at fibers 0..n_fibers-1
    pullback_depth: int
    convergence_delta: float
    equivariance_residual: float


@dataclass(frozen=True)
class AdaptedNormData:
    lambda_gap: float
    epsilon: float
    D1: np.ndarray  # per fiber
    D2: np.ndarray
    K: np.ndarray
    horizon: int
    tempered_probe: float
    rho_hat: float


@dataclass(frozen=True)
class AperiodicityResult:
    t_grid: np.ndarray
    rates: np.ndarray
    margin: float

    @property
    def aperiodic(self) -> bool:
        return bool(np.all(self.rates < 1.0 - self.margin))


def _pullback(path, cocycle, depth, theta=0.0, degeneracy_tol=1e-10):
    """Push the uniform density from fiber -depth up to fiber 0, renormalizing
    by the fiberwise integral (the lambda of the twisted cocycle)."""
    u = GridDensity.uniform(cocycle.N)
    for j in range(-depth, 0):
        u = cocycle.step(path, j, theta, u)
        lam = u.integral()
        if abs(lam) < degeneracy_tol:
            raise DegeneracyError(
                f"twisted pullback degenerated at fiber {j} (|lambda| = {abs(lam):.3e}); "
                "theta is outside the analytic neighborhood"
            )
        u = GridDensity(u.values / lam)
    return u


def equivariant_density(path, cocycle: TwistedCocycle, depth: int = 64) -> EquivariantDensity:
    """Pullback estimate of the fiberwise invariant density at fiber 0."""
    full = _pullback(path, cocycle, depth)
    half = _pullback(path, cocycle, depth // 2)
    delta = float(np.mean(np.abs(full.values - half.values)))
    return EquivariantDensity(full, depth, delta)


def fiber_densities(path, cocycle: TwistedCocycle, depth: int, n_fibers: int):
    """Equivariant densities at fibers 0..n_fibers (inclusive), obtained by
    one pullback and forward equivariant propagation."""
    v = _pullback(path, cocycle, depth)
    out = [v]
    for j in range(n_fibers):
        v = cocycle.step(path, j, 0.0, v)
        v = GridDensity(v.values / v.integral())
        out.append(v)
    return out


def default_probe(N: int) -> GridDensity:
    """Seeded positive probe for decay fits.

    A generic rough probe avoids the degenerate case where a structured
    probe (a half-interval step, a grid harmonic) is annihilated by one
    application of a dyadic map's transfer operator.
    """
    rng = np.random.default_rng(derive_seed(0, "decay-probe"))
    g = rng.standard_normal(N)
    g -= g.mean()
    return GridDensity(1.0 + 0.5 * g / np.max(np.abs(g)))


def decay_estimate(path, cocycle: TwistedCocycle, probe: GridDensity,
                   horizon: int, depth: int = 64) -> DecayFit:
    """Fit gap(n) = ||L^n probe - (int probe) v_n||_inf / ||probe||_1 to Z rho^n."""
    l1 = probe.l1_norm()
    if l1 <= 0.0:
        raise UsageError("probe must have nonzero L1 norm")
    vs = fiber_densities(path, cocycle, depth, horizon)
    mass = probe.integral()
    u = probe
    gaps = np.empty(horizon + 1)
    for n in range(horizon + 1):
        gaps[n] = float(np.max(np.abs(u.values - mass * vs[n].values))) / l1
        if n < horizon:
            u = cocycle.step(path, n, 0.0, u)
    ns = np.arange(horizon + 1)
    keep = np.isfinite(gaps) & (gaps > NOISE_FLOOR)
    if np.count_nonzero(keep) < 2:
        return DecayFit(0.0, 0.0, gaps, np.array([]), horizon,
                        note="decay faster than resolvable")
    logg = np.log(gaps[keep])
    nn = ns[keep].astype(float)
    slope = np.polyfit(nn, logg, 1)[0]
    rho = float(np.exp(slope))
    Z = float(np.exp(np.max(logg - slope * nn)))
    return DecayFit(Z, rho, gaps, logg, horizon)


def twisted_eigendata(path, cocycle: TwistedCocycle, theta, depth: int = 64,
                      n_fibers: int = 1, theta_max: float = 1.0) -> EigenData:
    """Sequential pullback estimate of the twisted eigendata.

    The fiberwise eigenvalue is the integral of the twisted image of the
    normalized eigen-density; at theta = 0 this reduces exactly to the
    untwisted pullback.
    """
    theta = complex(theta)
    if abs(theta) > theta_max + 1e-12:
        raise UsageError(f"|theta| = {abs(theta):.4g} exceeds theta_max = {theta_max}")
    if theta != 0 and cocycle.observable is None:
        raise UsageError("twisted eigendata requires an observable")

    u = _pullback(path, cocycle, depth, theta)
    half = _pullback(path, cocycle, max(depth // 2, 1), theta)
    delta = float(np.mean(np.abs(u.values - half.values)))

    # independent one-step check: advance the half-depth pullback to fiber 1
    step_full = cocycle.step(path, 0, theta, u)
    lam0 = step_full.integral()
    half_next = cocycle.step(path, 0, theta, half)
    half_next = GridDensity(half_next.values / half_next.integral())
    residual = float(np.mean(np.abs(step_full.values - lam0 * half_next.values)))

    lambdas = np.empty(n_fibers, dtype=complex)
    w = u
    for j in range(n_fibers):
        w = cocycle.step(path, j, theta, w)
        lam = w.integral()
        if abs(lam) < 1e-10:
            raise DegeneracyError(f"|lambda| degenerated at fiber {j}")
        lambdas[j] = lam
        w = GridDensity(w.values / lam)
    return EigenData(theta, u, lambdas, depth, delta, residual)


def _batch_stderr(x: np.ndarray, batches: int = 16) -> float:
    n = len(x)
    if n < batches:
        return float(np.std(x) / np.sqrt(max(n, 1)))
    m = n // batches
    means = x[: m * batches].reshape(batches, m).mean(axis=1)
    return float(np.std(means, ddof=1) / np.sqrt(batches))


def lambda_curve(path, cocycle: TwistedCocycle, theta_grid, depth: int = 64,
                 n_birkhoff: int = 256, theta_max: float = 1.0):
    """Birkhoff estimate of Lambda(theta) = avg log|lambda_omega^theta| with
    batch-means standard errors."""
    out = []
    for theta in theta_grid:
        ed = twisted_eigendata(path, cocycle, theta, depth, n_birkhoff, theta_max)
        logs = np.log(np.abs(ed.lambdas))
        out.append({
            "theta": complex(theta),
            "Lambda": float(np.mean(logs)),
            "stderr": _batch_stderr(logs),
        })
    return out


def autocovariance_series(path, cocycle: TwistedCocycle, obs, n_fibers: int,
                          h_max: int, depth: int = 64):
    """Fiberwise truncated Green-Kubo sums

        int psi_j^2 v_j dm + 2 sum_{h<=h_max} int L^h(psi_j v_j) psi_{j+h} dm

    returned per fiber together with the fiber BV bounds of the observable.
    """
    N = cocycle.N
    mids = midpoints(N)
    vs = fiber_densities(path, cocycle, depth, n_fibers + h_max)
    syms = [path.symbol_at(j) for j in range(n_fibers + h_max)]
    gs = [obs.values(j, syms[j], mids) for j in range(n_fibers + h_max)]

    # identical fibers (deterministic map, constant centering) need one pass
    distinct = n_fibers
    if len(set(syms)) == 1 and all(np.array_equal(g, gs[0]) for g in gs[1:]):
        distinct = 1

    terms = np.empty(n_fibers)
    for j in range(distinct):
        term = float(np.mean(gs[j] ** 2 * vs[j].values.real))
        u = gs[j] * vs[j].values.real
        for h in range(1, h_max + 1):
            u = cocycle.operator(syms[j + h - 1]).matrix @ u
            term += 2.0 * float(np.mean(u * gs[j + h]))
        terms[j] = term
    if distinct == 1:
        terms[:] = terms[0]
    bv_bounds = np.array([obs.fiber_bv_bound(j, syms[j]) for j in range(n_fibers)])
    return terms, bv_bounds


def lambda_derivs(path, cocycle: TwistedCocycle, obs, h_fd: float = 0.05,
                  depth: int = 64, n_birkhoff: int = 256, h_max: int = 30,
                  center_tol: float = 1e-10):
    """Finite-difference derivatives of Lambda at 0 plus the per-fiber series
    evaluation of the second derivative, Birkhoff-averaged."""
    vs = fiber_densities(path, cocycle, depth, min(n_birkhoff, 64))
    mids = midpoints(cocycle.N)
    for j in range(min(n_birkhoff, 64)):
        g = obs.values(j, path.symbol_at(j), mids)
        resid = abs(float(np.mean(g * vs[j].values.real)))
        if resid > center_tol:
            raise UsageError(f"observable not centered at fiber {j} (residual {resid:.2e})")

    curve = lambda_curve(path, cocycle, [-h_fd, 0.0, h_fd], depth, n_birkhoff)
    lm, l0, lp = (c["Lambda"] for c in curve)
    d1 = (lp - lm) / (2.0 * h_fd)
    d2 = (lp - 2.0 * l0 + lm) / h_fd**2
    series, _ = autocovariance_series(path, cocycle, obs, n_birkhoff, h_max, depth)
    return {
        "lambda1": d1,
        "lambda2_fd": d2,
        "series_second_deriv": float(np.mean(series)),
        "stderr": max(c["stderr"] for c in curve),
    }


def probe_basis(N: int, n_random: int = 16) -> np.ndarray:
    """Zero-mean probe block: seeded gaussians plus N/16 coarse Haar steps."""
    rng = np.random.default_rng(derive_seed(0, "adapted-probes"))
    cols = []
    for _ in range(n_random):
        g = rng.standard_normal(N)
        cols.append(g - g.mean())
    C = N // 16
    block = N // C
    for k in range(C):
        h = np.zeros(N)
        h[k * block: k * block + block // 2] = 1.0
        h[k * block + block // 2: (k + 1) * block] = -1.0
        cols.append(h)
    return np.column_stack(cols)


def _bv_columns(U: np.ndarray) -> np.ndarray:
    return np.abs(U).mean(axis=0) + np.abs(np.roll(U, -1, axis=0) - U).sum(axis=0)


def projection(d: GridDensity, v0: GridDensity) -> GridDensity:
    """Pi(omega): remove the top Oseledets component against v_omega^0."""
    return GridDensity(d.values - d.integral() * v0.values)


def adapted_norm_diagnostics(path, cocycle: TwistedCocycle, n_fibers: int = 1,
                             lambda_gap: float | None = None,
                             epsilon: float | None = None, H: int = 8,
                             depth: int = 64,
                             decay: DecayFit | None = None) -> AdaptedNormData:
    """Truncated estimators of the adapted-norm constants D1, D2, K per fiber.

    Suprema are truncated at horizon H; operator norms on the zero-mean
    subspace are certified lower bounds over the probe basis.
    """
    if H < 4:
        raise UsageError("adapted-norm horizon H must be >= 4")
    if decay is None:
        decay = decay_estimate(path, cocycle, default_probe(cocycle.N),
                               max(2 * H, 20), depth)
    if not 0.0 < decay.rho_hat < 1.0:
        raise ConfigurationError("no usable decay certificate (rho_hat outside (0,1))")
    gap = -np.log(decay.rho_hat)
    if lambda_gap is None:
        lambda_gap = gap / 2.0
    if epsilon is None:
        epsilon = min(0.1, gap / 4.0)
    if lambda_gap >= gap:
        raise ConfigurationError(
            f"lambda_gap = {lambda_gap:.4g} must lie below the fitted gap {gap:.4g}")

    vs = fiber_densities(path, cocycle, depth, n_fibers + H)
    bv_v = np.array([v.bv_norm() for v in vs])
    B = probe_basis(cocycle.N)
    bv0 = _bv_columns(B)

    D1 = np.empty(n_fibers)
    D2 = np.empty(n_fibers)
    for j in range(n_fibers):
        U = B
        growth = 1.0  # n = 0 term
        best = growth  # e^{lambda*0} = 1
        for n in range(1, H + 1):
            U = cocycle.operator(path.symbol_at(j + n - 1)).matrix @ U
            growth = float(np.max(_bv_columns(U) / bv0))
            best = max(best, growth * np.exp(lambda_gap * n))
        D1[j] = (1.0 + bv_v[j]) * best
        D2[j] = float(np.max(bv_v[j: j + H + 1] * np.exp(-epsilon * np.arange(H + 1))))
    K = np.maximum(D1 + 2.0, D2)
    window = max(n_fibers - 1, 1)
    tempered = float(np.max(np.abs(np.log(K[:window + 1]))) / window)
    return AdaptedNormData(lambda_gap, epsilon, D1, D2, K, H, tempered, decay.rho_hat)


def aperiodicity_check(path, cocycle: TwistedCocycle, t_grid, horizon: int = 12,
                       margin: float = 0.02) -> AperiodicityResult:
    """Fitted decay rate of ||L^{it,n}|| over the probe basis, per t."""
    t_grid = np.asarray(t_grid, dtype=float)
    N = cocycle.N
    B = probe_basis(N).astype(complex)
    B = np.column_stack([np.ones(N, dtype=complex), B])  # norms on all of BV
    bv0 = _bv_columns(B)
    rates = np.empty(len(t_grid))
    for k, t in enumerate(t_grid):
        U = B
        logs = []
        for n in range(1, horizon + 1):
            sym = path.symbol_at(n - 1)
            obs = cocycle.observable
            w = cocycle.weight(sym, 1j * t, obs.offset(n - 1), obs.scale(n - 1))
            U = cocycle.operator(sym).matrix @ (w.values[:, None] * U)
            norm = float(np.max(_bv_columns(U) / bv0))
            if norm <= NOISE_FLOOR:
                break
            logs.append(np.log(norm))
        if len(logs) < 2:
            rates[k] = 0.0
            continue
        slope = np.polyfit(np.arange(1, len(logs) + 1, dtype=float),
                           np.array(logs), 1)[0]
        rates[k] = float(np.exp(slope))
    return AperiodicityResult(t_grid, rates, margin)
