"""Batch front-end: scenario configs in, CSV results and a manifest out."""

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .base import BaseSystem, sample_path
from .config import ValidationError, load_config
from .density import GridDensity
from .errors import (AperiodicityError, ConfigurationError, ConvexityError,
                     DegeneracyError, QlimitsError)
from .maps import validate_scenario
from .observables import make_observable
from .spectral import (adapted_norm_diagnostics, aperiodicity_check,
                       decay_estimate, default_probe, equivariant_density,
                       lambda_curve,
                       lambda_derivs)
from .stats import (birkhoff_sample, center, char_fn_check, clt_test,
                    lclt_test, ldp_empirical, ldp_rate, scale_by_K, variance)
from .ulam import TwistedCocycle

log = logging.getLogger("qlimits")

EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_STAGE = 4

_REFUSABLE = (AperiodicityError, DegeneracyError, ConvexityError)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


class Runner:
    """Executes the stage graph for one scenario, memoizing intermediates."""

    def __init__(self, cfg, out_dir, threads=1, seed_override=None):
        self.cfg = cfg
        self.out_dir = out_dir
        self.threads = max(int(threads), 1)
        os.makedirs(out_dir, exist_ok=True)
        base = cfg.base
        if seed_override is not None:
            base = dataclasses.replace(base, master_seed=int(seed_override))
        self.base = base
        self.master_seed = base.master_seed

        fwd_need = max(
            max(cfg.n_list, default=0),
            cfg.n_birkhoff,
            cfg.n_fibers_series,
            cfg.horizon,
        ) + cfg.h_max + 16
        self.path = sample_path(base, 2 * cfg.depth, fwd_need)
        self._fwd_need = fwd_need
        self._cache = {}
        self.manifest = {
            "config": cfg.raw,
            "resolved_seeds": {"master_seed": self.master_seed, "mc_seed": cfg.mc_seed},
            "library_version": __version__,
            "stages": {},
            "deltas": {},
            "outputs": {},
            "warnings": [],
        }

    # ---- memoized intermediates -------------------------------------------

    def _get(self, key, builder):
        if key not in self._cache:
            self._cache[key] = builder()
        return self._cache[key]

    def raw_obs(self):
        return self._get("raw_obs", lambda: make_observable(
            self.cfg.observable_name, self.base.alphabet_size,
            self.cfg.observable_params))

    def bare_cocycle(self):
        # untwisted machinery shares Ulam matrices with the twisted cocycle
        return self.cocycle()

    def cocycle(self):
        return self._get("cocycle", lambda: TwistedCocycle(
            self.cfg.family, self.cfg.N, self.raw_obs()))

    def density(self):
        def build():
            eq = equivariant_density(self.path, self.cocycle(), self.cfg.depth)
            self.manifest["deltas"]["density_convergence"] = eq.convergence_delta
            return eq
        return self._get("density", build)

    def decay(self):
        def build():
            return decay_estimate(self.path, self.cocycle(),
                                  default_probe(self.cfg.N),
                                  self.cfg.horizon, self.cfg.depth)
        return self._get("decay", build)

    def _swap_observable(self, obs):
        old = self.cocycle()
        new = TwistedCocycle(self.cfg.family, self.cfg.N, obs)
        new._ops = old._ops  # Ulam matrices do not depend on the observable
        self._cache["cocycle"] = new

    def centered_obs(self):
        def build():
            # fibers >= 0 are centered against the same pullback anchor that
            # every downstream consumer recomputes, so their residuals are at
            # machine precision rather than at the pullback convergence level
            depth = self.cfg.depth
            neg = center(self.raw_obs(), self.path, self.cocycle(),
                         -depth, 0, depth)
            pos = center(self.raw_obs(), self.path, self.cocycle(),
                         0, self._fwd_need, depth)
            offsets = np.concatenate([neg.offsets, pos.offsets])
            obs = self.raw_obs().with_offsets(-depth, offsets)
            self._swap_observable(obs)
            return obs
        return self._get("centered_obs", build)

    def adapted(self):
        def build():
            n_fib = max(max(self.cfg.n_list, default=0), self.cfg.n_fibers_series)
            return adapted_norm_diagnostics(
                self.path, self.cocycle(), n_fibers=n_fib,
                depth=self.cfg.depth, decay=self.decay())
        return self._get("adapted", build)

    def working_obs(self):
        def build():
            obs = self.centered_obs()
            if self.cfg.scaling == "K2":
                obs = scale_by_K(obs, self.adapted())
                self._swap_observable(obs)
            return obs
        return self._get("working_obs", build)

    def v0(self):
        self.working_obs()
        return self.density().density

    def curve(self):
        def build():
            self.working_obs()
            thetas = np.linspace(-self.cfg.theta_window, self.cfg.theta_window,
                                 self.cfg.theta_points)
            return lambda_curve(self.path, self.cocycle(), thetas,
                                self.cfg.depth, self.cfg.n_birkhoff,
                                theta_max=self.cfg.theta_window)
        return self._get("curve", build)

    def variance_report(self):
        def build():
            obs = self.working_obs()
            fd = lambda_derivs(self.path, self.cocycle(), obs, self.cfg.h_fd,
                               self.cfg.depth, self.cfg.n_birkhoff, self.cfg.h_max)
            sample = birkhoff_sample(self.path, self.cfg.family, obs,
                                     max(self.cfg.n_list), self.cfg.M,
                                     self.cfg.mc_seed, self.v0())
            self._cache[("sample", max(self.cfg.n_list))] = sample
            return variance(self.path, self.cfg.family, self.cocycle(), obs,
                            self.cfg.h_max, self.cfg.n_fibers_series,
                            self.cfg.depth, decay=self.decay(), mc=sample, fd=fd)
        return self._get("variance_report", build)

    def sigma2(self) -> float:
        rep = self.variance_report()
        return rep.sigma2_series if rep.sigma2_series is not None else rep.sigma2_mc

    def sample(self, n):
        key = ("sample", n)
        return self._get(key, lambda: birkhoff_sample(
            self.path, self.cfg.family, self.working_obs(), n, self.cfg.M,
            self.cfg.mc_seed, self.v0()))

    def aperiodicity(self):
        def build():
            self.working_obs()
            return aperiodicity_check(self.path, self.cocycle(), self.cfg.t_grid)
        return self._get("aperiodicity", build)

    # ---- stages ------------------------------------------------------------

    def stage_density(self):
        out = os.path.join(self.out_dir, "density.csv")
        self.density().density.to_csv(out)
        return [out]

    def stage_decay(self):
        fit = self.decay()
        out = os.path.join(self.out_dir, "decay.csv")
        write_csv(out, ["n", "gap"], list(enumerate(fit.gaps)))
        self.manifest["deltas"]["decay_rho_hat"] = fit.rho_hat
        return [out]

    def stage_lyapunov(self):
        out = os.path.join(self.out_dir, "lambda.csv")
        write_csv(out, ["theta_re", "theta_im", "Lambda", "stderr"],
                  [(c["theta"].real, c["theta"].imag, c["Lambda"], c["stderr"])
                   for c in self.curve()])
        return [out]

    def stage_variance(self):
        rep = self.variance_report()
        out = os.path.join(self.out_dir, "variance.csv")
        write_csv(out, ["sigma2_series", "sigma2_mc", "sigma2_mc_stderr",
                        "sigma2_fd", "tail_bound", "h_max"],
                  [(rep.sigma2_series, rep.sigma2_mc, rep.sigma2_mc_stderr,
                    rep.sigma2_fd, rep.tail_bound, rep.h_max)])
        if rep.note:
            self.manifest["warnings"].append(rep.note)
        return [out]

    def stage_clt(self):
        n = max(self.cfg.n_list)
        sample = self.sample(n)
        sigma2 = self.sigma2()
        res = clt_test(sample, sigma2, self.cfg.tolerances.get("ks", 0.02))
        scaled = np.sort(sample.values / np.sqrt(n))
        qs = np.linspace(-4.0, 4.0, 161) * np.sqrt(sigma2)
        emp = np.searchsorted(scaled, qs, side="right") / len(scaled)
        from scipy.special import ndtr
        gauss = ndtr(qs / np.sqrt(sigma2))
        out = os.path.join(self.out_dir, "clt.csv")
        write_csv(out, ["quantile", "empirical", "gaussian"],
                  list(zip(qs, emp, gauss)))
        self.manifest["deltas"]["clt_ks_distance"] = res["ks_distance"]
        self.manifest["deltas"]["clt_pass"] = bool(res["pass"])
        return [out]

    def stage_ldp(self):
        rates = ldp_rate(self.curve(), self.cfg.eps_grid)
        emp = ldp_empirical(self.path, self.cfg.family, self.working_obs(),
                            self.cfg.n_list, self.cfg.M, self.cfg.eps_grid,
                            self.cfg.mc_seed, self.v0())
        c_of = {r["eps"]: r["c"] for r in rates}
        out = os.path.join(self.out_dir, "ldp.csv")
        write_csv(out, ["n", "eps", "empirical_rate", "c_eps", "wilson_lo", "wilson_hi"],
                  [(r["n"], r["eps"], r["rate"], c_of[r["eps"]],
                    r["wilson_lo"], r["wilson_hi"]) for r in emp])
        return [out]

    def stage_lclt(self):
        rows = lclt_test(self.path, self.cfg.family, self.working_obs(),
                         self.sigma2(), self.cfg.n_list, self.cfg.M, self.cfg.J,
                         self.cfg.s_grid, self.cfg.mc_seed, self.v0(),
                         aperiodicity=self.aperiodicity())
        out = os.path.join(self.out_dir, "lclt.csv")
        write_csv(out, ["n", "sup_deviation", "stderr"],
                  [(r["n"], r["sup_deviation"], r["stderr"]) for r in rows])
        return [out]

    def stage_charfn(self):
        n = max(self.cfg.n_list)
        rows = char_fn_check(self.path, self.cfg.family, self.cocycle(),
                             self.working_obs(), self.sigma2(), self.cfg.t_grid,
                             n, self.cfg.M, self.cfg.mc_seed, self.v0())
        out = os.path.join(self.out_dir, "charfn.csv")
        write_csv(out, ["t", "operator_value_re", "operator_value_im",
                        "mc_value_re", "mc_value_im", "gaussian_value"],
                  [(r["t"], r["operator"].real, r["operator"].imag,
                    r["mc"].real, r["mc"].imag, r["gaussian"]) for r in rows])
        return [out]

    def stage_diagnose(self):
        ad = self.adapted()
        self.working_obs()
        ap = self.aperiodicity()
        out1 = os.path.join(self.out_dir, "diagnostics.csv")
        write_csv(out1, ["fiber", "D1", "D2", "K"],
                  [(j, ad.D1[j], ad.D2[j], ad.K[j]) for j in range(len(ad.K))])
        out2 = os.path.join(self.out_dir, "aperiodicity.csv")
        write_csv(out2, ["t", "rate"], list(zip(ap.t_grid, ap.rates)))
        self.manifest["deltas"]["tempered_probe"] = ad.tempered_probe
        self.manifest["deltas"]["aperiodic"] = bool(ap.aperiodic)
        return [out1, out2]

    # ---- orchestration -----------------------------------------------------

    def run(self, stages=None):
        stages = list(stages if stages is not None else self.cfg.stages)
        report = validate_scenario(self.cfg.family, self.base)
        self.manifest["scenario_validation"] = report
        handlers = {
            "density": self.stage_density, "decay": self.stage_decay,
            "lyapunov": self.stage_lyapunov, "variance": self.stage_variance,
            "clt": self.stage_clt, "ldp": self.stage_ldp,
            "lclt": self.stage_lclt, "charfn": self.stage_charfn,
            "diagnose": self.stage_diagnose,
        }
        for name in stages:
            t0 = time.perf_counter()
            try:
                files = handlers[name]()
            except _REFUSABLE as exc:
                log.warning("stage %s refused: %s", name, exc)
                self.manifest["stages"][name] = {
                    "status": "refused", "reason": str(exc),
                    "seconds": time.perf_counter() - t0,
                }
                continue
            except QlimitsError as exc:
                self.manifest["stages"][name] = {
                    "status": "error", "reason": str(exc),
                    "seconds": time.perf_counter() - t0,
                }
                self._write_manifest()
                raise
            self.manifest["stages"][name] = {
                "status": "ok", "seconds": time.perf_counter() - t0,
            }
            for f in files:
                self.manifest["outputs"][os.path.basename(f)] = _sha256(f)
        self._write_manifest()
        return self.manifest

    def _write_manifest(self):
        mpath = os.path.join(self.out_dir, "manifest.json")
        with open(mpath, "w") as fh:
            json.dump(self.manifest, fh, indent=2, default=str)


def _print_validation(cfg):
    report = validate_scenario(cfg.family, cfg.base)
    print(f"expanding_on_average: {report['expanding_on_average']}")
    print(f"mean_log_lambda: {report['mean_log_lambda']:.6g}")
    for i, pm in enumerate(report["per_map"]):
        print(f"map[{i}]: lambda_min={pm['lambda_min']:.6g} "
              f"distortion={pm['distortion']:.6g} c0={pm['c0']:.6g} "
              f"branches={pm['branch_count']}")
    warnings = []
    if cfg.observable_name == "indicator-step":
        warnings.append("lattice-valued observable: the local CLT will be refused")
    for i, m in enumerate(cfg.family.maps):
        if hasattr(m, "branch_image"):
            covered = sum(hi - lo for lo, hi in
                          (m.branch_image(b) for b in range(m.branch_count)))
            if covered < 1.0 - 1e-12:
                warnings.append(f"map[{i}] has non-onto branches")
    for w in warnings:
        print(f"warning: {w}")
    return report


def build_parser():
    p = argparse.ArgumentParser(prog="qlimits",
                                description="Quenched limit-theorem experiments for "
                                            "random transfer-operator cocycles")
    p.add_argument("--config", required=True, help="scenario JSON file")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker cap")
    p.add_argument("--seed-override", type=int, default=None)
    sub = p.add_subparsers(dest="verb", required=True)
    for verb in ("validate", "run", "density", "lyapunov", "variance", "clt",
                 "ldp", "lclt", "diagnose"):
        sub.add_parser(verb)
    return p


_VERB_STAGES = {
    "density": ["density"], "lyapunov": ["lyapunov"], "variance": ["variance"],
    "clt": ["clt"], "ldp": ["ldp"], "lclt": ["lclt"],
    "diagnose": ["diagnose"],
}


def main(argv=None) -> int:
    logging.basicConfig(
        level=getattr(logging, os.environ.get("QL_LOG_LEVEL", "warn").upper(), logging.WARNING))
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except (json.JSONDecodeError, OSError) as exc:
        log.error("cannot parse config: %s", exc)
        return EXIT_PARSE
    except (ValidationError, ConfigurationError) as exc:
        log.error("invalid config: %s", exc)
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    if args.verb == "validate":
        _print_validation(cfg)
        return 0

    stages = _VERB_STAGES.get(args.verb)
    runner = Runner(cfg, args.out, args.threads, args.seed_override)
    try:
        runner.run(stages)
    except QlimitsError as exc:
        stage = next((s for s, r in runner.manifest["stages"].items()
                      if r.get("status") == "error"), "unknown")
        log.error("stage %s failed: %s", stage, exc)
        print(f"stage error in {stage!r} ({exc.__class__.__name__}): {exc}",
              file=sys.stderr)
        return EXIT_STAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
