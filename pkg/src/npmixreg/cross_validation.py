"""C-fold cross-validation for the noise scale.

For a candidate ``sigma`` the data are split into ``C`` roughly equal folds;
the NPMLE is fitted on each complement and scored by the held-out log
densities,

    CV(sigma) = - sum_c sum_{i in fold c} log f_hat^{-c}_{x_i}(y_i).

``select_sigma`` evaluates a grid and returns its minimizer.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .density import log_fitted_vector
from .fw_solver import FitConfig, fit_npmle
from .model import Dataset, Domain, Linear, RegressionFunction, check_sigma

logger = logging.getLogger(__name__)

LARGE_N = 300


class CvError(RuntimeError):
    """A fold fit failed; the message names the fold and sigma."""


@dataclass(frozen=True)
class CvConfig:
    """Cross-validation settings.

    ``folds=None`` means 5 folds when ``n >= 300`` and 10 otherwise.
    ``sigma_grid=None`` means ``grid_size`` log-spaced values spanning
    ``[grid_low * s, grid_high * s]`` with ``s`` the least-squares residual
    standard deviation. Fold ``c`` is fitted with ``fit`` reseeded from
    ``(fold_seed, c)``.
    """

    folds: Optional[int] = None
    sigma_grid: Optional[Sequence[float]] = None
    fold_seed: int = 0
    fit: FitConfig = field(default_factory=FitConfig)
    grid_size: int = 15
    grid_low: float = 0.05
    grid_high: float = 2.0

    def __post_init__(self):
        if self.sigma_grid is not None:
            grid = tuple(float(s) for s in self.sigma_grid)
            if not grid:
                raise ValueError("sigma grid is empty")
            for s in grid:
                check_sigma(s)
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ValueError("sigma grid must be strictly ascending")
            object.__setattr__(self, "sigma_grid", grid)
        if self.folds is not None and self.folds < 2:
            raise ValueError("need at least 2 folds")
        if self.grid_size < 1 or not (0 < self.grid_low < self.grid_high):
            raise ValueError("invalid default grid settings")

    def n_folds(self, n: int) -> int:
        C = self.folds if self.folds is not None else (5 if n >= LARGE_N else 10)
        if C > n:
            raise ValueError(f"{C} folds requested for {n} observations")
        return C

    def grid(self, data: Dataset, rf: RegressionFunction) -> tuple:
        if self.sigma_grid is not None:
            return self.sigma_grid
        s = residual_scale(data, rf)
        return tuple(np.geomspace(self.grid_low * s, self.grid_high * s, self.grid_size).tolist())


def residual_scale(data: Dataset, rf: RegressionFunction) -> float:
    """Least-squares residual standard deviation (response std for nonlinear ``rf``)."""
    if isinstance(rf, Linear):
        basis = data.X
    elif hasattr(rf, "basis"):
        basis = rf.basis(data.X)
    else:
        basis = None
    if basis is None:
        s = float(np.std(data.y))
    else:
        beta = np.linalg.lstsq(basis, data.y, rcond=None)[0]
        s = float(np.std(data.y - basis @ beta))
    if not s > 0:
        raise ValueError("responses have zero residual spread; cannot anchor the sigma grid")
    return s


def fold_partition(n: int, C: int, seed: int = 0) -> list:
    """Split ``range(n)`` into ``C`` folds of sizes differing by at most one."""
    if not 2 <= C <= n:
        raise ValueError(f"need 2 <= folds <= n, got folds={C}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, C)]


def _fold_seed(seed: int, c: int) -> int:
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, c]).generate_state(1, np.uint64)[0])


def fold_scores(data: Dataset, rf: RegressionFunction, domain: Domain, sigma: float,
                cfg: CvConfig) -> np.ndarray:
    """Held-out log-density sums, one per fold."""
    sigma = check_sigma(sigma)
    folds = fold_partition(data.n, cfg.n_folds(data.n), cfg.fold_seed)
    out = np.empty(len(folds))
    for c, test in enumerate(folds):
        train = np.setdiff1d(np.arange(data.n), test)
        try:
            if train.size == 0:
                raise ValueError("empty training set")
            fcfg = cfg.fit.with_seed(_fold_seed(cfg.fold_seed, c))
            res = fit_npmle(data.subset(train), rf, sigma, domain, fcfg)
        except Exception as exc:
            raise CvError(f"fit failed in fold {c} at sigma={sigma!r}: {exc}") from exc
        held = log_fitted_vector(rf, sigma, res.measure, data.X[test], data.y[test])
        # exact zeros give -inf, i.e. an infinitely bad criterion, not a crash
        out[c] = float(np.sum(held))
        logger.debug("sigma=%.4g fold %d: held-out loglik %.6f", sigma, c, out[c])
    return out


def cv_criterion(data: Dataset, rf: RegressionFunction, domain: Domain, sigma: float,
                 cfg: Optional[CvConfig] = None) -> float:
    """``CV(sigma)``: minus the total held-out log density."""
    cfg = cfg or CvConfig()
    return float(-np.sum(fold_scores(data, rf, domain, sigma, cfg)))


def select_sigma(data: Dataset, rf: RegressionFunction, domain: Domain,
                 cfg: Optional[CvConfig] = None, n_jobs: int = 1):
    """Grid minimizer of :func:`cv_criterion`.

    Returns
    -------
    sigma_hat : float
        The smallest grid value attaining the minimum.
    table : list of (sigma, criterion)
        Every grid point with its criterion, in grid order.
    """
    cfg = cfg or CvConfig()
    grid = cfg.grid(data, rf)
    cfg = replace(cfg, sigma_grid=grid)
    if n_jobs > 1 and len(grid) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            crits = list(pool.map(cv_criterion, *zip(*[(data, rf, domain, s, cfg) for s in grid])))
    else:
        crits = [cv_criterion(data, rf, domain, s, cfg) for s in grid]
    table = list(zip(grid, crits))
    best = int(np.argmin(crits))  # first minimizer = smallest sigma
    return float(grid[best]), table
