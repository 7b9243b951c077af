"""Per-observation posterior inference under a discrete mixing measure.

Given ``G = sum_j pi_j delta_{beta_j}`` and noise scale ``sigma``, the
posterior over atoms for an observation ``(x, y)`` is

    P(beta = beta_j | x, y)  proportional to  pi_j phi((y - r(x, beta_j)) / sigma).

With ``G`` the NPMLE this is the empirical Bayes posterior; with the true
mixing measure it is the oracle Bayes posterior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .model import MixingMeasure, RegressionFunction, check_sigma


class PosteriorError(ValueError):
    """The posterior is undefined for some observation."""


@dataclass(frozen=True)
class PosteriorSummary:
    """Posterior quantities for ``n`` observations over ``k`` atoms.

    Attributes
    ----------
    weights : ndarray of shape (n, k)
        Posterior probabilities; rows sum to one.
    mean : ndarray of shape (n, d)
        Posterior mean coefficient vector per observation.
    map_index : ndarray of shape (n,)
        Index of the most probable atom (lowest index on ties).
    """

    weights: np.ndarray
    mean: np.ndarray
    map_index: np.ndarray

    @property
    def map_weight(self) -> np.ndarray:
        return self.weights[np.arange(self.weights.shape[0]), self.map_index]


def _log_numerators(G: MixingMeasure, rf: RegressionFunction, sigma, X, y):
    sigma = check_sigma(sigma)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"{X.shape[0]} covariate rows but {y.shape[0]} responses")
    rf.check_dims(X, G.atoms)
    z = (y[:, None] - rf.mean_matrix(X, G.atoms)) / sigma
    with np.errstate(divide="ignore"):
        logpi = np.log(G.weights)
    # the common factor 1/(sigma sqrt(2 pi)) cancels in the normalization
    return logpi[None, :] - 0.5 * z * z


def _normalize(lognum):
    lse = logsumexp(lognum, axis=1, keepdims=True)
    bad = np.flatnonzero(~np.isfinite(lse[:, 0]))
    if bad.size:
        raise PosteriorError(f"posterior undefined for observation {int(bad[0])}")
    return np.exp(lognum - lse)


def posterior_weights(G: MixingMeasure, rf: RegressionFunction, sigma, X, y) -> np.ndarray:
    """Posterior atom probabilities, shape ``(n, k)``; one row per observation."""
    return _normalize(_log_numerators(G, rf, sigma, X, y))


def posterior_mean(G: MixingMeasure, rf: RegressionFunction, sigma, X, y) -> np.ndarray:
    """Posterior mean of the coefficient vector, shape ``(n, d)``."""
    return posterior_weights(G, rf, sigma, X, y) @ G.atoms


def map_component(G: MixingMeasure, rf: RegressionFunction, sigma, X, y) -> np.ndarray:
    """Index of the atom maximizing ``pi_j phi(z_j)``, lowest index on ties."""
    # np.argmax returns the first maximizer
    return np.argmax(_log_numerators(G, rf, sigma, X, y), axis=1)


def summarize(G: MixingMeasure, rf: RegressionFunction, sigma, X, y) -> PosteriorSummary:
    """Posterior weights, means and MAP atoms in one pass."""
    lognum = _log_numerators(G, rf, sigma, X, y)
    W = _normalize(lognum)
    return PosteriorSummary(weights=W, mean=W @ G.atoms, map_index=np.argmax(lognum, axis=1))
