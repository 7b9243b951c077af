import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from npmixreg.empirical_bayes import (PosteriorError, map_component, posterior_mean,
                                      posterior_weights, summarize)
from npmixreg.fw_solver import fit_npmle
from npmixreg.model import Box, Linear, MixingMeasure
from npmixreg.simgen import THREE_LINES, Scenario, circle_measure, generate


def test_single_atom():
    G = MixingMeasure.point_mass([1.0, 2.0])
    X, y = [[1.0, 0.5]], [7.0]
    np.testing.assert_array_equal(posterior_weights(G, Linear(), 0.5, X, y), [[1.0]])
    np.testing.assert_array_equal(posterior_mean(G, Linear(), 0.5, X, y), [[1.0, 2.0]])
    assert map_component(G, Linear(), 0.5, X, y)[0] == 0


def test_symmetric_two_atoms():
    G = MixingMeasure([[-1.0], [1.0]], [0.5, 0.5])
    w = posterior_weights(G, Linear(), 0.7, [[1.0]], [0.0])
    np.testing.assert_allclose(w, [[0.5, 0.5]], rtol=1e-15)
    np.testing.assert_allclose(posterior_mean(G, Linear(), 0.7, [[1.0]], [0.0]), [[0.0]], atol=1e-15)


def test_scalar_arithmetic_example():
    s = 0.4
    G = MixingMeasure([[0.0], [2 * s]], [0.3, 0.7])
    # residuals 0 and -2 sigma at y = 0
    w = posterior_weights(G, Linear(), s, [[1.0]], [0.0])[0]
    a, b = 0.3, 0.7 * math.exp(-2.0)
    np.testing.assert_allclose(w, [a / (a + b), b / (a + b)], rtol=1e-14)
    np.testing.assert_allclose(w, [0.7600, 0.2400], atol=1e-4)


def test_dominant_weight_decides_equal_residuals():
    G = MixingMeasure([[1.0], [-1.0]], [0.2, 0.8])
    assert map_component(G, Linear(), 0.5, [[1.0]], [0.0])[0] == 1


def test_ties_go_to_lowest_index():
    G = MixingMeasure([[1.0], [-1.0]], [0.5, 0.5])
    assert map_component(G, Linear(), 0.5, [[1.0]], [0.0])[0] == 0


def test_far_observation_does_not_underflow():
    G = MixingMeasure([[0.0], [1.0]], [0.5, 0.5])
    w = posterior_weights(G, Linear(), 0.01, [[1.0]], [1e3])
    np.testing.assert_allclose(w, [[0.0, 1.0]], atol=1e-300)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_undefined_posterior_raises():
    G = MixingMeasure([[0.0]], [1.0])
    with pytest.raises(PosteriorError):
        posterior_weights(G, Linear(), 1e-300, [[1.0]], [1e300])


def test_summary_consistent(rng):
    G = MixingMeasure(rng.normal(size=(4, 2)), rng.dirichlet(np.ones(4)))
    X = np.column_stack([np.ones(30), rng.uniform(-1, 3, 30)])
    y = rng.normal(size=30)
    S = summarize(G, Linear(), 0.6, X, y)
    np.testing.assert_array_equal(S.weights, posterior_weights(G, Linear(), 0.6, X, y))
    np.testing.assert_array_equal(S.mean, posterior_mean(G, Linear(), 0.6, X, y))
    np.testing.assert_array_equal(S.map_index, map_component(G, Linear(), 0.6, X, y))
    np.testing.assert_array_equal(S.map_weight, S.weights.max(axis=1))


@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.floats(0.05, 3.0))
def test_posterior_properties(seed, k, s):
    r = np.random.default_rng(seed)
    G = MixingMeasure(r.normal(scale=2, size=(k, 2)), r.dirichlet(np.ones(k)))
    X = np.column_stack([np.ones(20), r.uniform(-1, 3, 20)])
    y = r.normal(scale=3, size=20)
    W = posterior_weights(G, Linear(), s, X, y)
    assert np.all(W >= 0)
    np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
    M = posterior_mean(G, Linear(), s, X, y)
    lo, hi = G.atoms.min(axis=0), G.atoms.max(axis=0)
    slack = 1e-12 * (1 + np.abs(G.atoms).max())
    assert np.all(M >= lo - slack) and np.all(M <= hi + slack)
    np.testing.assert_array_equal(map_component(G, Linear(), s, X, y), np.argmax(W, axis=1))


@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10.0))
def test_weights_depend_only_on_z_scores(seed, c):
    # scaling y, the atoms and sigma together leaves every residual z-score fixed
    r = np.random.default_rng(seed)
    atoms = r.normal(size=(3, 2))
    w = r.dirichlet(np.ones(3))
    X = np.column_stack([np.ones(10), r.uniform(-1, 3, 10)])
    y = r.normal(size=10)
    W1 = posterior_weights(MixingMeasure(atoms, w), Linear(), 0.5, X, y)
    W2 = posterior_weights(MixingMeasure(c * atoms, w), Linear(), 0.5 * c, X, c * y)
    np.testing.assert_allclose(W1, W2, rtol=1e-8, atol=1e-12)


def test_sim1_map_recovery(sim1, sim1_fit):
    data, truth = sim1
    G = sim1_fit.measure
    idx = map_component(G, Linear(), 0.5, data.X, data.y)
    dist = np.linalg.norm(G.atoms[idx] - THREE_LINES[truth.labels], axis=1)
    assert np.mean(dist <= 0.5) >= 0.85


def test_circles_eb_tracks_oracle_bayes():
    data, truth = generate(Scenario("concentric_circles", n=500, seed=0))
    fit = fit_npmle(data, Linear(), 0.5, Box.cube(-10, 10, 2))
    eb = posterior_mean(fit.measure, Linear(), 0.5, data.X, data.y)
    ob = posterior_mean(circle_measure(), Linear(), 0.5, data.X, data.y)
    for j in range(2):
        slope = float(eb[:, j] @ ob[:, j] / (ob[:, j] @ ob[:, j]))
        assert 0.9 <= slope <= 1.1
