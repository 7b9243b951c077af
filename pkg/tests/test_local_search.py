import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from npmixreg.local_search import (SearchConfig, SubproblemSpec, solve_subproblem, start_points,
                                   subproblem_objective)
from npmixreg.model import Ball, Box, Dataset, Linear, Trigonometric
from npmixreg.simgen import Scenario, generate


def _spec(data, w=None, sigma=0.5, domain=None, rf=None):
    w = np.ones(data.n) if w is None else w
    return SubproblemSpec(w, data, rf or Linear(), sigma, domain or Box.cube(-10, 10, data.p))


def test_single_kernel_peak_value():
    d = Dataset([[1.0]], [2.0])
    assert subproblem_objective(_spec(d, sigma=0.3), [2.0]) == pytest.approx(
        1 / (0.3 * math.sqrt(2 * math.pi)), rel=1e-15)


def test_objective_linear_in_weights(rng):
    d = Dataset(np.column_stack([np.ones(7), rng.uniform(-1, 3, 7)]), rng.normal(size=7))
    w = rng.uniform(0.1, 1, 7)
    b = [0.3, -0.2]
    assert subproblem_objective(_spec(d, 2 * w), b) == pytest.approx(2 * subproblem_objective(_spec(d, w), b), rel=1e-15)


def test_objective_direct_oracle(rng):
    d = Dataset(np.column_stack([np.ones(5), rng.uniform(-1, 3, 5)]), rng.normal(size=5))
    w = rng.uniform(0.1, 2, 5)
    b = np.array([0.4, 0.9])
    s = 0.6
    naive = sum(wi * math.exp(-0.5 * ((yi - xi @ b) / s) ** 2) / (s * math.sqrt(2 * math.pi))
                for wi, xi, yi in zip(w, d.X, d.y))
    assert subproblem_objective(_spec(d, w, s), b) == pytest.approx(naive, rel=1e-12)


def test_weights_validated():
    d = Dataset([[1.0], [1.0]], [0.0, 1.0])
    with pytest.raises(ValueError):
        SubproblemSpec(np.array([1.0, 0.0]), d, Linear(), 0.5, Box.cube(-1, 1, 1))
    with pytest.raises(ValueError):
        SubproblemSpec(np.array([1.0]), d, Linear(), 0.5, Box.cube(-1, 1, 1))


def test_single_observation_peak():
    d = Dataset([[1.0]], [2.0])
    beta, val = solve_subproblem(_spec(d), SearchConfig(rng_seed=1))
    assert abs(beta[0] - 2.0) <= 1e-5


def test_concentrated_weights_hit_observation(rng):
    data, _ = generate(Scenario("three_lines", n=60, seed=4))
    i = 17
    w = np.full(data.n, 1e-12)
    w[i] = 1.0
    beta, _ = solve_subproblem(_spec(data, w), SearchConfig(rng_seed=3))
    assert abs(data.y[i] - data.X[i] @ beta) <= 1e-4


def test_intercept_only_grid_oracle():
    sim, _ = generate(Scenario("three_lines", n=200, seed=7))
    data = Dataset(np.ones((sim.n, 1)), sim.y)
    w = np.random.default_rng(2).uniform(0.5, 1.5, data.n) / data.n
    spec = _spec(data, w, sigma=0.5)
    beta, val = solve_subproblem(spec, SearchConfig(rng_seed=5))
    grid = np.linspace(-10, 10, 10**6)
    best = 0.0
    for chunk in np.array_split(grid, 200):
        best = max(best, float(spec.values(chunk[:, None]).max()))
    assert val >= best * (1 - 1e-6)
    assert abs(val - best) <= 1e-6 * best


def test_returned_value_recomputed_and_feasible(sim1):
    data, _ = sim1
    w = np.random.default_rng(0).uniform(0.1, 1.0, data.n)
    spec = _spec(data, w, domain=Ball([0.0, 0.0], 2.0))
    beta, val = solve_subproblem(spec, SearchConfig(num_starts=6, rng_seed=9))
    assert spec.domain.contains(beta, slack=1e-9)
    assert val == subproblem_objective(spec, beta)


@settings(max_examples=15)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_never_worse_than_starts(seed, starts):
    data, _ = generate(Scenario("three_lines", n=40, seed=seed % 1000))
    w = np.random.default_rng(seed).uniform(0.1, 1.0, data.n)
    spec = _spec(data, w)
    cfg = SearchConfig(num_starts=starts, rng_seed=seed)
    beta, val = solve_subproblem(spec, cfg)
    for b0 in start_points(spec, cfg):
        assert val >= subproblem_objective(spec, b0) - 1e-12 * max(val, 1e-300)
    assert spec.domain.contains(beta, slack=1e-9)


@settings(max_examples=10)
@given(st.integers(0, 2**32 - 1))
def test_monotone_in_restarts(seed):
    data, _ = generate(Scenario("trigonometric", n=40, seed=seed % 1000))
    spec = _spec(data, np.ones(data.n), rf=Trigonometric(), domain=Box.cube(-10, 10, 2))
    cfg = SearchConfig(num_starts=4, rng_seed=seed)
    _, v1 = solve_subproblem(spec, cfg)
    _, v2 = solve_subproblem(spec, replace(cfg, num_starts=8))
    assert v2 >= v1 - 1e-12


def test_start_list_prefix_stable(sim1):
    data, _ = sim1
    spec = _spec(data)
    a = start_points(spec, SearchConfig(num_starts=5, rng_seed=3))
    b = start_points(spec, SearchConfig(num_starts=10, rng_seed=3))
    np.testing.assert_array_equal(a, b[:5])


def test_deterministic(sim1):
    data, _ = sim1
    spec = _spec(data)
    r1 = solve_subproblem(spec, SearchConfig(num_starts=5, rng_seed=11))
    r2 = solve_subproblem(spec, SearchConfig(num_starts=5, rng_seed=11))
    np.testing.assert_array_equal(r1[0], r2[0])
    assert r1[1] == r2[1]


def test_config_validation():
    with pytest.raises(ValueError):
        SearchConfig(num_starts=0)
    with pytest.raises(ValueError):
        SearchConfig(x_tolerance=0.0)
