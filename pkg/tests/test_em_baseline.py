import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from npmixreg.density import fitted_vector
from npmixreg.em_baseline import EmConfig, RandomRestarts, TruePlus, fit_em, responsibilities
from npmixreg.model import Dataset, Linear, MixingMeasure
from npmixreg.simgen import THREE_LINES, THREE_LINES_PROBS, Scenario, generate

# EM-from-truth components reported for the three-line example, sorted by
# intercept; the middle line's intercept is printed as -0.8473 in the source,
# a sign slip given the generating line 1 + 1.5x
REFERENCE = [((-0.9428, 0.4754), 0.38), ((0.8473, 1.5483), 0.29), ((2.9395, -0.9934), 0.33)]


def _true_init():
    return TruePlus(THREE_LINES, THREE_LINES_PROBS, 0.5)


def test_single_component_is_least_squares(rng):
    x = rng.uniform(-1, 3, 50)
    d = Dataset.with_intercept(x, 2 - x + 0.3 * rng.standard_normal(50))
    res = fit_em(d, EmConfig(k=1))
    beta = np.linalg.lstsq(d.X, d.y, rcond=None)[0]
    np.testing.assert_allclose(res.coefs[0], beta, rtol=1e-10, atol=1e-12)
    assert res.sigma == pytest.approx(np.std(d.y - d.X @ beta), rel=1e-10)
    assert res.probs[0] == 1.0 and res.converged


def test_sim1_true_init_matches_reference(sim1):
    data, _ = sim1
    res = fit_em(data, EmConfig(k=3, init=_true_init()))
    assert res.converged
    for (b, p), (ref_b, ref_p) in zip(res.components, REFERENCE):
        assert np.linalg.norm(b - np.array(ref_b)) <= 0.3
        assert abs(p - ref_p) <= 0.05


def test_random_restarts_find_the_same_solution(sim1):
    data, _ = sim1
    a = fit_em(data, EmConfig(k=3, init=_true_init()))
    b = fit_em(data, EmConfig(k=3, init=RandomRestarts(count=10, seed=1)))
    assert b.loglik >= a.loglik - 1e-6
    np.testing.assert_allclose(b.coefs, a.coefs, atol=1e-3)


def test_monotone_trace(sim1):
    data, _ = sim1
    res = fit_em(data, EmConfig(k=3, init=RandomRestarts(count=1, seed=4)))
    assert res.reseeded == 0
    assert np.all(np.diff(res.trace) >= -1e-10 * abs(res.trace[-1]))


def test_loglik_is_total_under_fitted_measure(sim1):
    data, _ = sim1
    res = fit_em(data, EmConfig(k=3, init=_true_init()))
    f = fitted_vector(Linear(), res.sigma, res.measure, data)
    assert res.loglik == pytest.approx(float(np.sum(np.log(f))), rel=1e-10)


def test_fixed_sigma_kept(sim1):
    data, _ = sim1
    res = fit_em(data, EmConfig(k=3, init=_true_init(), fixed_sigma=0.5))
    assert res.sigma == 0.5


def test_sorted_by_intercept(sim1):
    data, _ = sim1
    res = fit_em(data, EmConfig(k=3, init=RandomRestarts(count=3, seed=0)))
    assert np.all(np.diff(res.coefs[:, 0]) >= 0)


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_responsibility_rows_sum_to_one(seed, k):
    r = np.random.default_rng(seed)
    d = Dataset(np.column_stack([np.ones(30), r.uniform(-1, 3, 30)]), r.normal(scale=3, size=30))
    R, L = responsibilities(d, r.normal(size=(k, 2)), r.dirichlet(np.ones(k)), float(r.uniform(0.05, 2)))
    assert np.all(R >= 0)
    np.testing.assert_allclose(R.sum(axis=1), 1.0, atol=1e-12)
    assert np.isfinite(L)


def test_empty_component_is_reseeded():
    r = np.random.default_rng(0)
    x = r.uniform(-1, 3, 40)
    d = Dataset.with_intercept(x, 1 + x + 0.1 * r.standard_normal(40))
    # the second component sits absurdly far away and gets no responsibility
    init = TruePlus(np.array([[1.0, 1.0], [500.0, 0.0]]), np.array([0.5, 0.5]), 0.1)
    res = fit_em(d, EmConfig(k=2, init=init, max_iters=50))
    assert res.reseeded >= 1
    assert np.all(np.isfinite(res.coefs))


def test_config_validation():
    with pytest.raises(ValueError):
        EmConfig(k=0)
    with pytest.raises(ValueError):
        EmConfig(k=2, init=RandomRestarts(count=0))
    with pytest.raises(ValueError):
        fit_em(generate(Scenario("three_lines", n=50))[0],
               EmConfig(k=2, init=TruePlus(np.zeros((3, 2)), np.ones(3) / 3, 0.5)))


def test_small_n_warns():
    d = Dataset.with_intercept([0.0, 1.0, 2.0], [0.0, 1.0, 2.5])
    with pytest.warns(UserWarning):
        fit_em(d, EmConfig(k=2, init=RandomRestarts(count=1), max_iters=5))


def test_npmle_dominates_em(sim1, sim1_fit):
    data, _ = sim1
    em = fit_em(data, EmConfig(k=3, init=_true_init()))
    f_em = fitted_vector(Linear(), 0.5, MixingMeasure(em.coefs, em.probs), data)
    assert sim1_fit.total_loglik >= float(np.sum(np.log(f_em))) - 1e-6
