"""Shared fixtures: the two workhorse scenarios at desk scale."""

import numpy as np
import pytest

from qlimits import (BaseSystem, MapFamily, TwistedCocycle, doubling_map,
                     make_observable, sample_path, scaling_map)
from qlimits.spectral import fiber_densities
from qlimits.stats import center

N_GRID = 1024


@pytest.fixture(scope="session")
def doubling():
    """Deterministic doubling map with the cos(2 pi x) observable, centered."""
    base = BaseSystem(1, "iid", np.array([1.0]), master_seed=1)
    family = MapFamily((doubling_map(),))
    path = sample_path(base, 200, 8000)
    obs = make_observable("cos", 1)
    cocycle = TwistedCocycle(family, N_GRID, obs)
    obs_c = center(obs, path, cocycle, -64, 6000, 64)
    cocycle_c = TwistedCocycle(family, N_GRID, obs_c)
    cocycle_c._ops = cocycle._ops
    v0 = fiber_densities(path, cocycle_c, 64, 0)[0]
    return {
        "base": base, "family": family, "path": path,
        "obs": obs, "obs_c": obs_c, "cocycle": cocycle_c, "v0": v0,
    }


@pytest.fixture(scope="session")
def random_scenario():
    """{3x, x/2} with p = (0.7, 0.3), master seed 42, cos observable."""
    base = BaseSystem(2, "iid", np.array([0.7, 0.3]), master_seed=42)
    family = MapFamily((scaling_map(3.0), scaling_map(0.5)))
    path = sample_path(base, 200, 6000)
    obs = make_observable("cos", 2)
    cocycle = TwistedCocycle(family, N_GRID, obs)
    obs_c = center(obs, path, cocycle, -64, 5200, 64)
    cocycle_c = TwistedCocycle(family, N_GRID, obs_c)
    cocycle_c._ops = cocycle._ops
    v0 = fiber_densities(path, cocycle_c, 64, 0)[0]
    return {
        "base": base, "family": family, "path": path,
        "obs": obs, "obs_c": obs_c, "cocycle": cocycle_c, "v0": v0,
    }
