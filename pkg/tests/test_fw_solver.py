import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from npmixreg.density import atom_vector, log_likelihood
from npmixreg.fw_solver import (FitConfig, FitError, curvature_diagnostic, duality_gap,
                                fit_npmle)
from npmixreg.model import Box, Dataset, Linear
from npmixreg.simgen import THREE_LINES
from npmixreg.simplex_opt import optimize_weights

from oracles import grid_npmle, intercept_only_instance


# duality gap -----------------------------------------------------------------

def test_gap_zero_at_same_vector():
    f = np.array([0.2, 1.3, 0.7])
    assert duality_gap(f, f) == 0.0


def test_gap_direct_oracle(rng):
    f = rng.uniform(0.1, 2.0, 9)
    g = rng.uniform(0.1, 2.0, 9)
    oracle = math.fsum((gi - fi) / (9 * fi) for fi, gi in zip(f, g))
    assert duality_gap(f, g) == pytest.approx(oracle, abs=1e-12)


def test_gap_nonpositive_at_simplex_optimum(rng):
    A = rng.uniform(0.05, 2.0, size=(12, 20))
    res = optimize_weights(A, tol=1e-10)
    for j in range(A.shape[1]):
        assert duality_gap(res.fitted, A[:, j]) <= 1e-10 + 1e-12


# curvature -------------------------------------------------------------------

@pytest.mark.parametrize("k", [0, 1, 5, 40])
def test_curvature_zero_when_g_equals_f(k):
    f = np.array([0.4, 0.9, 1.7])
    assert curvature_diagnostic(f, f, k) == pytest.approx(0.0, abs=1e-12)


def test_curvature_zero_for_affine_segment():
    # with n=1 and g = f the segment is a single point, L is trivially affine on it
    assert curvature_diagnostic([2.0], [2.0], 3) == 0.0


def test_curvature_direct_oracle(rng):
    f = rng.uniform(0.2, 2.0, 5)
    g = rng.uniform(0.2, 2.0, 5)
    k = 3
    gam = 2 / (k + 2)
    Lf = sum(math.log(v) for v in f) / 5
    gap = sum((b - a) / (5 * a) for a, b in zip(f, g))
    Lm = sum(math.log((1 - gam) * a + gam * b) for a, b in zip(f, g)) / 5
    oracle = 2 / gam**2 * (Lf + gam * gap - Lm)
    assert curvature_diagnostic(f, g, k) == pytest.approx(oracle, abs=1e-12)
    assert curvature_diagnostic(f, g, k) >= 0


def test_curvature_rejects_negative_k():
    with pytest.raises(ValueError):
        curvature_diagnostic([1.0], [1.0], -1)


# fit_npmle -------------------------------------------------------------------

def test_duplicated_observation_single_atom():
    d = Dataset([[2.0], [2.0]], [3.0, 3.0])
    res = fit_npmle(d, Linear(), 0.5, Box.cube(-10, 10, 1))
    assert res.measure.k == 1
    assert abs(res.measure.atoms[0, 0] - 1.5) <= 1e-4
    assert res.converged and res.trace[-1].gap <= 1e-6


@pytest.mark.parametrize("seed", [0, 3, 7])
def test_intercept_only_matches_grid_oracle(seed):
    d = intercept_only_instance(seed)
    Lg, grid, gw = grid_npmle(d, 1.0, -10, 10)
    res = fit_npmle(d, Linear(), 1.0, Box.cube(-10, 10, 1), FitConfig().with_seed(seed))
    assert abs(res.loglik - Lg) <= 1e-5 or res.loglik > Lg
    for rec in res.trace:
        assert Lg - rec.loglik <= rec.gap + 1e-6


def test_sim1_structure(sim1_fit):
    G = sim1_fit.measure
    for atom, w in zip(G.atoms, G.weights):
        if w >= 0.10:
            assert np.min(np.linalg.norm(THREE_LINES - atom, axis=1)) <= 0.5


def test_sim1_result_invariants(sim1, sim1_fit):
    data, truth = sim1
    res = sim1_fit
    L = [r.loglik for r in res.trace]
    assert np.all(np.diff(L) >= -1e-12)
    assert res.measure.k <= data.n
    assert res.measure.k <= len(res.trace) + 1
    assert abs(res.measure.weights.sum() - 1) <= 1e-10
    assert res.total_loglik == pytest.approx(data.n * res.loglik, rel=1e-12)
    assert np.isfinite(res.max_psi)
    # the fitted vector is the mixture of the surviving atoms
    f = sum(w * atom_vector(Linear(), 0.5, a, data) for a, w in zip(res.measure.atoms, res.measure.weights))
    assert log_likelihood(f) == pytest.approx(res.loglik, abs=1e-9)


def test_beats_truth_on_sim1(sim1, sim1_fit):
    data, truth = sim1
    f_true = sum(w * atom_vector(Linear(), 0.5, a, data)
                 for a, w in zip(truth.measure.atoms, truth.measure.weights))
    assert sim1_fit.loglik >= log_likelihood(f_true)


def test_deterministic():
    d = intercept_only_instance(11)
    cfg = FitConfig().with_seed(4)
    a = fit_npmle(d, Linear(), 1.0, Box.cube(-10, 10, 1), cfg)
    b = fit_npmle(d, Linear(), 1.0, Box.cube(-10, 10, 1), cfg)
    np.testing.assert_array_equal(a.measure.atoms, b.measure.atoms)
    np.testing.assert_array_equal(a.measure.weights, b.measure.weights)
    np.testing.assert_array_equal(a.log_fitted, b.log_fitted)
    assert a.trace == b.trace


def test_max_iters_flags_nonconvergence():
    d = intercept_only_instance(2)
    res = fit_npmle(d, Linear(), 1.0, Box.cube(-10, 10, 1), FitConfig(max_outer_iters=1))
    assert not res.converged and res.stop_reason == "max_outer_iters"
    assert len(res.trace) == 1


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_initialization_raises():
    # residual / sigma overflows, so the log density is -inf
    d = Dataset([[1.0]], [1e300])
    with pytest.raises(FitError):
        fit_npmle(d, Linear(), 1e-300, Box.cube(-1, 1, 1), FitConfig(init="random"))


def test_dimension_mismatch():
    d = Dataset(np.ones((3, 2)), np.zeros(3))
    with pytest.raises(ValueError):
        fit_npmle(d, Linear(), 1.0, Box.cube(-1, 1, 3))


def test_config_validation():
    with pytest.raises(ValueError):
        FitConfig(gap_tolerance=0.0)
    with pytest.raises(ValueError):
        FitConfig(init="grid")
    with pytest.raises(ValueError):
        FitConfig(max_outer_iters=0)


def test_random_init_reaches_same_likelihood():
    d = intercept_only_instance(5)
    K = Box.cube(-10, 10, 1)
    a = fit_npmle(d, Linear(), 1.0, K)
    b = fit_npmle(d, Linear(), 1.0, K, replace(FitConfig(init="random"), init_seed=9))
    assert abs(a.loglik - b.loglik) <= 1e-6


@settings(max_examples=10)
@given(st.integers(0, 2**32 - 1))
def test_outer_monotone_and_support_bound(seed):
    r = np.random.default_rng(seed)
    n = int(r.integers(5, 30))
    x = r.uniform(-1, 3, n)
    y = r.choice([-1.0, 2.0], n) + x * r.choice([0.5, -1.0], n) + 0.3 * r.standard_normal(n)
    d = Dataset(np.column_stack([np.ones(n), x]), y)
    res = fit_npmle(d, Linear(), 0.4, Box.cube(-10, 10, 2),
                    FitConfig(max_outer_iters=30).with_seed(seed))
    L = [rec.loglik for rec in res.trace]
    assert np.all(np.diff(L) >= -1e-12)
    assert res.measure.k <= min(n, len(res.trace) + 1)
    assert res.loglik >= L[-1] - 1e-12
