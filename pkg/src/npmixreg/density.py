"""Mixture conditional densities and the mean log-likelihood.

Kernels are evaluated in the log domain,
``log f = -log(sigma*sqrt(2*pi)) - z**2/2``, and mixtures combine atoms with
log-sum-exp. Residuals of twenty or more standard deviations are routine
during the atom search and would underflow a direct sum.
"""

import math

import numpy as np
from scipy.special import logsumexp

from .model import Dataset, MixingMeasure, RegressionFunction, check_sigma

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
MIN_ATOM_WEIGHT = 1e-16


class DomainError(ValueError):
    """A fitted vector has a nonpositive or non-finite entry."""


def _sigma_vector(sigma, k):
    s = np.asarray(sigma, dtype=float)
    if s.ndim == 0:
        check_sigma(s)
        return np.full(k, float(s))
    if s.shape != (k,) or not np.all(np.isfinite(s)) or np.any(s <= 0):
        raise ValueError("per-atom sigma must be a positive vector matching the atoms")
    return s


def log_kernel_matrix(rf: RegressionFunction, sigma, X, y, atoms) -> np.ndarray:
    """``log((1/sigma) phi((y_i - r(x_i, beta_j))/sigma))`` as an (n, k) array.

    ``sigma`` may be a scalar or one value per atom.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
    rf.check_dims(X, atoms)
    s = _sigma_vector(sigma, atoms.shape[0])
    z = (y[:, None] - rf.mean_matrix(X, atoms)) / s[None, :]
    return -np.log(s)[None, :] - LOG_SQRT_2PI - 0.5 * z * z


def log_fitted_vector(rf, sigma, measure: MixingMeasure, X, y) -> np.ndarray:
    """``log f^G_{x_i}(y_i)`` for every row."""
    keep = measure.weights >= MIN_ATOM_WEIGHT
    atoms = measure.atoms[keep]
    sig = sigma if np.ndim(sigma) == 0 else np.asarray(sigma)[keep]
    logk = log_kernel_matrix(rf, sig, X, y, atoms)
    return logsumexp(logk + np.log(measure.weights[keep])[None, :], axis=1)


def fitted_vector(rf, sigma, measure: MixingMeasure, data: Dataset) -> np.ndarray:
    """The vector ``f^G`` of mixture densities at the observed pairs."""
    return np.exp(log_fitted_vector(rf, sigma, measure, data.X, data.y))


def conditional_density(rf, sigma, measure: MixingMeasure, x, y) -> float:
    """Mixture density of the response ``y`` given a single covariate ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(np.exp(log_fitted_vector(rf, sigma, measure, x[None, :], [y])[0]))


def density_grid(rf, sigma, measure: MixingMeasure, x, ygrid) -> np.ndarray:
    """Mixture density at fixed ``x`` evaluated over an array of responses."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    ygrid = np.asarray(ygrid, dtype=float)
    X = np.broadcast_to(x, (ygrid.shape[0], x.shape[0]))
    return np.exp(log_fitted_vector(rf, sigma, measure, X, ygrid))


def atom_vector(rf, sigma, beta, data: Dataset) -> np.ndarray:
    """Single-atom fitted vector ``f^beta``; every entry is positive."""
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    return np.exp(log_kernel_matrix(rf, check_sigma(sigma), data.X, data.y, beta)[:, 0])


def _check_fitted(f):
    f = np.asarray(f, dtype=float)
    bad = np.flatnonzero(~(np.isfinite(f) & (f > 0)))
    if bad.size:
        i = int(bad[0])
        raise DomainError(f"fitted vector entry {i} is {f[i]!r}; densities must be positive")
    return f


def log_likelihood(f) -> float:
    """Mean log-likelihood ``(1/n) sum_i log f_i``."""
    f = _check_fitted(f)
    return float(np.mean(np.log(f)))


def total_log_likelihood(f) -> float:
    """Unnormalized ``sum_i log f_i``."""
    f = _check_fitted(f)
    return float(np.sum(np.log(f)))


def gradient(f) -> np.ndarray:
    """Gradient of :func:`log_likelihood`: entries ``1/(n f_i)``."""
    f = _check_fitted(f)
    return 1.0 / (f.shape[0] * f)
