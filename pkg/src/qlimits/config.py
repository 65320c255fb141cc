"""Scenario configuration: a single strict JSON document.

Unknown keys are errors so scenario files double as the experiment record.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .base import BaseSystem
from .errors import ConfigurationError
from .maps import MapFamily, PiecewiseLinearMap, SmoothCircleMap, doubling_map, scaling_map
from .observables import Observable, make_observable

_STAGES = ("density", "decay", "lyapunov", "variance", "clt", "ldp", "lclt",
           "charfn", "diagnose")


class ValidationError(ConfigurationError):
    def __init__(self, field_name, message):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


def _require_keys(obj, allowed, required, where):
    for k in obj:
        if k not in allowed:
            raise ValidationError(f"{where}.{k}", "unknown key")
    for k in required:
        if k not in obj:
            raise ValidationError(f"{where}.{k}", "missing required key")


@dataclass
class ExperimentConfig:
    base: BaseSystem
    family: MapFamily
    observable_name: str
    observable_params: dict
    scaling: str  # "none" | "K2"
    N: int
    depth: int
    horizon: int
    h_max: int
    stages: tuple
    n_list: tuple
    M: int
    mc_seed: int
    theta_window: float
    theta_points: int
    eps_grid: tuple
    t_grid: tuple
    J: tuple
    s_grid: tuple
    n_birkhoff: int
    n_fibers_series: int
    h_fd: float
    tolerances: dict
    raw: dict = field(repr=False, default_factory=dict)

    def make_observable(self) -> Observable:
        return make_observable(self.observable_name, self.base.alphabet_size,
                               self.observable_params)


def _build_map(spec, where):
    _require_keys(spec, {"type", "breakpoints", "slopes", "offsets", "factor",
                         "degree", "eps", "phase"}, {"type"}, where)
    kind = spec["type"]
    if kind == "doubling":
        return doubling_map()
    if kind == "scaling":
        if "factor" not in spec:
            raise ValidationError(f"{where}.factor", "missing for scaling map")
        return scaling_map(float(spec["factor"]))
    if kind == "pl":
        for k in ("breakpoints", "slopes", "offsets"):
            if k not in spec:
                raise ValidationError(f"{where}.{k}", "missing for pl map")
        return PiecewiseLinearMap(tuple(spec["breakpoints"]), tuple(spec["slopes"]),
                                  tuple(spec["offsets"]))
    if kind == "smooth":
        if "degree" not in spec:
            raise ValidationError(f"{where}.degree", "missing for smooth map")
        return SmoothCircleMap(int(spec["degree"]), float(spec.get("eps", 0.0)),
                               float(spec.get("phase", 0.0)))
    raise ValidationError(f"{where}.type", f"unknown map type {kind!r}")


def parse_config(doc: dict) -> ExperimentConfig:
    _require_keys(doc, {"base", "maps", "grid", "observable", "harness"},
                  {"base", "maps", "grid", "observable", "harness"}, "config")

    b = doc["base"]
    _require_keys(b, {"alphabet_size", "mode", "weights", "transition", "master_seed"},
                  {"alphabet_size", "master_seed"}, "base")
    mode = b.get("mode", "iid")
    try:
        base = BaseSystem(
            alphabet_size=int(b["alphabet_size"]),
            mode=mode,
            weights=np.asarray(b["weights"], dtype=float) if "weights" in b else None,
            transition=np.asarray(b["transition"], dtype=float) if "transition" in b else None,
            master_seed=int(b["master_seed"]),
        )
    except ConfigurationError as exc:
        raise ValidationError("base.weights" if mode == "iid" else "base.transition",
                              str(exc)) from exc

    maps_spec = doc["maps"]
    if not isinstance(maps_spec, list) or len(maps_spec) != base.alphabet_size:
        raise ValidationError("maps", "need exactly one map per alphabet symbol")
    family = MapFamily(tuple(_build_map(m, f"maps[{i}]") for i, m in enumerate(maps_spec)))

    g = doc["grid"]
    _require_keys(g, {"N", "depth", "horizon", "h_max"}, {"N"}, "grid")
    N = int(g["N"])
    if N < 8 or N & (N - 1):
        raise ValidationError("grid.N", "must be a power of two >= 8")
    depth = int(g.get("depth", 64))
    horizon = int(g.get("horizon", 40))
    h_max = int(g.get("h_max", 30))

    o = doc["observable"]
    _require_keys(o, {"name", "params", "scaling"}, {"name"}, "observable")
    scaling = o.get("scaling", "none")
    if scaling not in ("none", "K2"):
        raise ValidationError("observable.scaling", "must be 'none' or 'K2'")

    h = doc["harness"]
    _require_keys(h, {"run", "n_list", "M", "mc_seed", "theta_window", "theta_points",
                      "eps_grid", "t_grid", "J", "s_grid", "n_birkhoff",
                      "n_fibers_series", "h_fd", "tolerances"}, {"run"}, "harness")
    stages = tuple(h["run"])
    for s in stages:
        if s not in _STAGES:
            raise ValidationError("harness.run", f"unknown stage {s!r}")
    tolerances = dict(h.get("tolerances", {}))
    for k, v in tolerances.items():
        if not (isinstance(v, (int, float)) and v > 0):
            raise ValidationError(f"harness.tolerances.{k}", "must be strictly positive")

    return ExperimentConfig(
        base=base,
        family=family,
        observable_name=o["name"],
        observable_params=dict(o.get("params", {})),
        scaling=scaling,
        N=N,
        depth=depth,
        horizon=horizon,
        h_max=h_max,
        stages=stages,
        n_list=tuple(int(n) for n in h.get("n_list", [1000])),
        M=int(h.get("M", 10_000)),
        mc_seed=int(h.get("mc_seed", 7)),
        theta_window=float(h.get("theta_window", 1.0)),
        theta_points=int(h.get("theta_points", 21)),
        eps_grid=tuple(float(e) for e in h.get("eps_grid", [0.05, 0.1, 0.2])),
        t_grid=tuple(float(t) for t in h.get("t_grid", [0.5, 1.0, 2.0])),
        J=tuple(float(x) for x in h.get("J", [0.0, 0.5])),
        s_grid=tuple(float(s) for s in h.get("s_grid", [0.0, 1.0, 2.0])),
        n_birkhoff=int(h.get("n_birkhoff", 256)),
        n_fibers_series=int(h.get("n_fibers_series", 256)),
        h_fd=float(h.get("h_fd", 0.05)),
        tolerances=tolerances,
        raw=doc,
    )


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise json.JSONDecodeError(f"config {path}: {exc.msg}", exc.doc, exc.pos)
    return parse_config(doc)
