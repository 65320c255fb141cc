"""Driving-system tests: seed derivation, path windows, base validation."""

import numpy as np
import pytest

from qlimits import BaseSystem, OmegaPath, derive_seed, sample_path
from qlimits.errors import ConfigurationError, WindowExhaustedError


def test_derive_seed_deterministic_and_tag_separated():
    a = derive_seed(42, "fwd")
    assert a == derive_seed(42, "fwd")
    assert a != derive_seed(42, "bwd")
    assert a != derive_seed(43, "fwd")
    assert 0 <= a < 2**64


def test_iid_base_validation():
    with pytest.raises(ConfigurationError):
        BaseSystem(2, "iid", np.array([0.5, 0.4]))
    with pytest.raises(ConfigurationError):
        BaseSystem(2, "iid", np.array([1.2, -0.2]))
    with pytest.raises(ConfigurationError):
        BaseSystem(0)
    with pytest.raises(ConfigurationError):
        BaseSystem(1, "annealed")


def test_markov_base_validation():
    P = np.array([[1.0, 0.0], [0.0, 1.0]])  # reducible
    with pytest.raises(ConfigurationError):
        BaseSystem(2, "markov", transition=P)
    P = np.array([[0.5, 0.5], [0.3, 0.7]])
    b = BaseSystem(2, "markov", transition=P)
    pi = b.stationary()
    assert np.allclose(pi @ P, pi)
    assert abs(pi.sum() - 1.0) < 1e-12


def test_path_window_and_shift():
    b = BaseSystem(2, "iid", np.array([0.6, 0.4]), master_seed=3)
    p = sample_path(b, 5, 10)
    assert p.n_back == 5 and p.n_fwd == 10
    assert p.symbol_at(0) == p.shift(2).symbol_at(-2)
    with pytest.raises(WindowExhaustedError):
        p.symbol_at(11)
    with pytest.raises(WindowExhaustedError):
        p.symbol_at(-6)
    with pytest.raises(WindowExhaustedError):
        p.shift(-6)


def test_path_extension_is_consistent():
    # enlarging the window extends the same realization
    b = BaseSystem(3, "iid", np.array([0.2, 0.3, 0.5]), master_seed=11)
    small = sample_path(b, 4, 6)
    big = sample_path(b, 10, 20)
    for j in range(-4, 7):
        assert small.symbol_at(j) == big.symbol_at(j)


def test_iid_path_marginals():
    b = BaseSystem(2, "iid", np.array([0.7, 0.3]), master_seed=42)
    p = sample_path(b, 0, 50_000)
    freq = np.mean([p.symbol_at(j) for j in range(50_000)])
    assert abs(freq - 0.3) < 0.01


def test_markov_backward_extension_marginals():
    # the two-sided extension must preserve the stationary marginal
    P = np.array([[0.9, 0.1], [0.4, 0.6]])
    b = BaseSystem(2, "markov", transition=P, master_seed=5)
    pi = b.stationary()
    p = sample_path(b, 50_000, 0)
    freq = np.mean([p.symbol_at(-j) for j in range(1, 50_001)])
    assert abs(freq - pi[1]) < 0.02


def test_markov_backward_transition_statistics():
    # consecutive pairs in the past must follow the forward kernel
    P = np.array([[0.8, 0.2], [0.3, 0.7]])
    b = BaseSystem(2, "markov", transition=P, master_seed=9)
    p = sample_path(b, 80_000, 0)
    syms = [p.symbol_at(j) for j in range(-80_000, 1)]
    pairs = np.array(list(zip(syms[:-1], syms[1:])))
    for i in range(2):
        sel = pairs[pairs[:, 0] == i]
        emp = np.mean(sel[:, 1] == 1)
        assert abs(emp - P[i, 1]) < 0.02


def test_path_equality_and_immutability():
    b = BaseSystem(1, "iid", np.array([1.0]), master_seed=0)
    p = sample_path(b, 2, 2)
    assert p == p.shift(1).shift(-1)
    assert p != p.shift(1)
    with pytest.raises(ValueError):
        p.symbols[0] = 0
