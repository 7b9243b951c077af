"""Squared Hellinger distances between mixture conditional densities.

For two measures and a covariate ``x`` the conditional densities of the
response are finite Gaussian mixtures. We integrate

    h^2 = 2 - 2 * int sqrt(f_a(y) f_b(y)) dy

with composite Gauss-Legendre quadrature over a window reaching ``10 sigma``
past the extreme component means of both measures, doubling the panel count
until successive estimates agree. The Bhattacharyya integrand is smooth and
positive wherever either density is, which suits quadrature better than
``(sqrt f_a - sqrt f_b)^2``.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .density import LOG_SQRT_2PI, MIN_ATOM_WEIGHT, _sigma_vector
from .model import Dataset, MixingMeasure, RegressionFunction

WINDOW_SIGMAS = 10.0
DEFAULT_PANELS = 256
QUAD_TOL = 1e-10
MAX_PANELS = 2**16
GL_ORDER = 8

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(GL_ORDER)


class QuadratureError(RuntimeError):
    pass


def _components(rf, sigma, G: MixingMeasure, x):
    keep = G.weights >= MIN_ATOM_WEIGHT
    s = _sigma_vector(sigma, G.k)[keep]
    atoms = G.atoms[keep]
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mu = rf.mean_matrix(x[None, :], atoms)[0]
    return mu, s, np.log(G.weights[keep])


def _log_mixture(y, mu, s, logpi):
    z = (y[:, None] - mu[None, :]) / s[None, :]
    return logsumexp(logpi - np.log(s) - LOG_SQRT_2PI - 0.5 * z * z, axis=1)


def _composite_gl(fn, lo, hi, panels):
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    y = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    vals = fn(y).reshape(panels, GL_ORDER)
    return float(np.sum(half * (vals @ _GL_WEIGHTS)))


def bhattacharyya(rf: RegressionFunction, sigma_a, G_a: MixingMeasure,
                  sigma_b, G_b: MixingMeasure, x) -> float:
    """``int sqrt(f_a(y) f_b(y)) dy`` at covariate ``x``."""
    ca = _components(rf, sigma_a, G_a, x)
    cb = _components(rf, sigma_b, G_b, x)
    means = np.concatenate([ca[0], cb[0]])
    smax = max(ca[1].max(), cb[1].max())
    lo = means.min() - WINDOW_SIGMAS * smax
    hi = means.max() + WINDOW_SIGMAS * smax

    def integrand(y):
        return np.exp(0.5 * (_log_mixture(y, *ca) + _log_mixture(y, *cb)))

    panels = DEFAULT_PANELS
    prev = _composite_gl(integrand, lo, hi, panels)
    while panels < MAX_PANELS:
        panels *= 2
        cur = _composite_gl(integrand, lo, hi, panels)
        if abs(cur - prev) < QUAD_TOL:
            return cur
        prev = cur
    raise QuadratureError(
        f"quadrature did not converge at {panels} panels; last change {abs(cur - prev):.3e}"
    )


def hellinger_sq(rf: RegressionFunction, sigma_a, G_a: MixingMeasure,
                 sigma_b, G_b: MixingMeasure, x) -> float:
    """Squared Hellinger distance between the two conditional densities at ``x``.

    Returns a value in ``[0, 2]``.
    """
    bc = bhattacharyya(rf, sigma_a, G_a, sigma_b, G_b, x)
    return float(min(2.0, max(0.0, 2.0 - 2.0 * bc)))


def hellinger_fixed(rf: RegressionFunction, sigma_a, G_a: MixingMeasure,
                    sigma_b, G_b: MixingMeasure, data) -> float:
    """Average of :func:`hellinger_sq` over the design points of ``data``.

    ``data`` is a :class:`Dataset` or an ``(n, p)`` covariate array.
    """
    X = data.X if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, dtype=float))
    vals = [hellinger_sq(rf, sigma_a, G_a, sigma_b, G_b, x) for x in X]
    return float(np.mean(vals))


def hellinger_random_mc(rf: RegressionFunction, sigma_a, G_a: MixingMeasure,
                        sigma_b, G_b: MixingMeasure,
                        sampler: Callable[[np.random.Generator, int], np.ndarray],
                        m: int = 1000, seed: int = 0):
    """Monte-Carlo estimate of the random-design squared Hellinger distance.

    Parameters
    ----------
    sampler : callable
        ``sampler(rng, m)`` returns an ``(m, p)`` array of covariates drawn
        from the design distribution.
    m : int
        Number of fresh draws, at least 100.

    Returns
    -------
    (estimate, std_error)
    """
    if m < 100:
        raise ValueError("need at least 100 Monte-Carlo draws")
    X = np.atleast_2d(np.asarray(sampler(np.random.default_rng(seed), m), dtype=float))
    if X.shape[0] != m:
        raise ValueError(f"sampler returned {X.shape[0]} rows, expected {m}")
    vals = np.array([hellinger_sq(rf, sigma_a, G_a, sigma_b, G_b, x) for x in X])
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(m))
