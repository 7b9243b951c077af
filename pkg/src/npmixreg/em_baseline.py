"""Parametric EM for a k-component mixture of linear regressions.

All components share one noise scale, the same model the NPMLE fits but with
the number of atoms fixed in advance. It serves as the comparison method.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.special import logsumexp

from .density import LOG_SQRT_2PI
from .model import Dataset, MixingMeasure, check_sigma

logger = logging.getLogger(__name__)

EMPTY_TOL = 1e-12
MONOTONE_SLACK = 1e-10


@dataclass(frozen=True)
class TruePlus:
    """Start from given coefficients ``(k, p)``, probabilities and sigma."""

    components: np.ndarray
    probs: np.ndarray
    sigma: float


@dataclass(frozen=True)
class RandomRestarts:
    """``count`` starts from random hard assignments; the best is kept."""

    count: int = 10
    seed: int = 0


@dataclass(frozen=True)
class EmConfig:
    k: int
    init: Union[TruePlus, RandomRestarts] = RandomRestarts()
    max_iters: int = 500
    loglik_tol: float = 1e-9
    fixed_sigma: Optional[float] = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.max_iters < 1 or self.loglik_tol <= 0:
            raise ValueError("max_iters and loglik_tol must be positive")
        if isinstance(self.init, RandomRestarts) and self.init.count < 1:
            raise ValueError("need at least one restart")
        if self.fixed_sigma is not None:
            check_sigma(self.fixed_sigma)


@dataclass(frozen=True)
class EmResult:
    """Fitted components, sorted by intercept (first coefficient).

    ``loglik`` is the total ``sum_i log f_i`` at the returned parameters.
    ``reseeded`` counts empty-component rescues.
    """

    coefs: np.ndarray
    probs: np.ndarray
    sigma: float
    loglik: float
    converged: bool
    n_iter: int
    reseeded: int
    trace: tuple

    @property
    def measure(self) -> MixingMeasure:
        return MixingMeasure(self.coefs, self.probs)

    @property
    def components(self) -> list:
        return [(b, float(p)) for b, p in zip(self.coefs, self.probs)]


def _log_joint(X, y, coefs, probs, sigma):
    z = (y[:, None] - X @ coefs.T) / sigma
    with np.errstate(divide="ignore"):
        logpi = np.log(probs)
    return logpi[None, :] - 0.5 * z * z - np.log(sigma) - LOG_SQRT_2PI


def responsibilities(data: Dataset, coefs, probs, sigma):
    """E-step: ``(n, k)`` posterior component probabilities and total loglik."""
    lj = _log_joint(data.X, data.y, np.atleast_2d(coefs), np.asarray(probs, float), sigma)
    lse = logsumexp(lj, axis=1)
    return np.exp(lj - lse[:, None]), float(np.sum(lse))


def _m_step(X, y, R, fixed_sigma):
    n, k = R.shape
    coefs = np.empty((k, X.shape[1]))
    for l in range(k):
        sw = np.sqrt(R[:, l])
        coefs[l] = np.linalg.lstsq(sw[:, None] * X, sw * y, rcond=None)[0]
    if fixed_sigma is not None:
        sigma = fixed_sigma
    else:
        resid2 = (y[:, None] - X @ coefs.T) ** 2
        sigma = float(np.sqrt(np.sum(R * resid2) / n))
    return coefs, R.mean(axis=0), sigma


def _reseed(X, y, coefs, probs, sigma, empty):
    # the point worst explained by the current fit anchors the empty component
    resid = np.min(np.abs(y[:, None] - X @ coefs.T), axis=1)
    i = int(np.argmax(resid))
    coefs = coefs.copy()
    probs = probs.copy()
    for l in empty:
        coefs[l] = X[i] * (y[i] / float(X[i] @ X[i]))
        probs[l] = 1.0 / X.shape[0]
    return coefs, probs / probs.sum()


def _run(data: Dataset, coefs, probs, sigma, cfg: EmConfig):
    X, y = data.X, data.y
    if cfg.fixed_sigma is not None:
        sigma = cfg.fixed_sigma
    R, L = responsibilities(data, coefs, probs, sigma)
    trace = [L]
    converged = False
    reseeded = 0
    it = 0
    for it in range(1, cfg.max_iters + 1):
        coefs, probs, sigma = _m_step(X, y, R, cfg.fixed_sigma)
        if not sigma > 0:
            logger.warning("shared sigma collapsed to zero; stopping")
            break
        empty = np.flatnonzero(np.all(R < EMPTY_TOL, axis=0))
        if empty.size:
            coefs, probs = _reseed(X, y, coefs, probs, sigma, empty)
            reseeded += int(empty.size)
        R, L_new = responsibilities(data, coefs, probs, sigma)
        if not empty.size:
            assert L_new >= L - MONOTONE_SLACK * max(1.0, abs(L)), (L_new, L)
        trace.append(L_new)
        done = abs(L_new - L) <= cfg.loglik_tol and not empty.size
        L = L_new
        if done:
            converged = True
            break
    return coefs, probs, sigma, L, converged, it, reseeded, tuple(trace)


def fit_em(data: Dataset, cfg: EmConfig) -> EmResult:
    """Fit the k-component shared-sigma mixture of linear regressions by EM.

    Parameters
    ----------
    data : Dataset
        Covariates already contain any intercept column.
    cfg : EmConfig
        Component count, initialization and stopping rule.

    Returns
    -------
    EmResult
        Components sorted by intercept; ``loglik`` is a total, not a mean.
    """
    k, p = cfg.k, data.p
    if data.n <= k * (p + 1):
        warnings.warn(f"n={data.n} is small for k={k} components in dimension {p}", stacklevel=2)

    if isinstance(cfg.init, TruePlus):
        coefs0 = np.atleast_2d(np.asarray(cfg.init.components, dtype=float))
        probs0 = np.asarray(cfg.init.probs, dtype=float)
        if coefs0.shape != (k, p) or probs0.shape != (k,):
            raise ValueError(f"initial components must have shape ({k}, {p}) with {k} probabilities")
        best = _run(data, coefs0, probs0 / probs0.sum(), check_sigma(cfg.init.sigma), cfg)
    else:
        best = None
        for r in range(cfg.init.count):
            rng = np.random.default_rng([int(cfg.init.seed) & 0xFFFFFFFFFFFFFFFF, r])
            R0 = np.zeros((data.n, k))
            R0[np.arange(data.n), rng.integers(0, k, size=data.n)] = 1.0
            # light smoothing keeps every component nonempty at the first M-step
            R0 = 0.9 * R0 + 0.1 / k
            coefs0, probs0, sigma0 = _m_step(data.X, data.y, R0, None)
            cand = _run(data, coefs0, probs0, sigma0, cfg)
            if best is None or cand[3] > best[3]:
                best = cand

    coefs, probs, sigma, L, converged, it, reseeded, trace = best
    order = np.lexsort(coefs.T[::-1])  # by intercept, then later coefficients
    return EmResult(
        coefs=coefs[order], probs=probs[order], sigma=float(sigma), loglik=float(L),
        converged=converged, n_iter=it, reseeded=reseeded, trace=trace,
    )
