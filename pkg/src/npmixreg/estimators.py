"""scikit-learn style estimators wrapping the NPMLE and EM fits."""

from __future__ import annotations

from typing import Optional, Union

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .cross_validation import CvConfig, select_sigma
from .density import log_fitted_vector
from .em_baseline import EmConfig, RandomRestarts, fit_em
from .empirical_bayes import PosteriorSummary, summarize
from .fw_solver import FitConfig, fit_npmle
from .local_search import SearchConfig
from .model import Box, Dataset, Design, Domain, Linear, RegressionFunction, Trigonometric

_RF_NAMES = {"linear": Linear, "trigonometric": Trigonometric}


def _resolve_rf(rf) -> RegressionFunction:
    if isinstance(rf, RegressionFunction):
        return rf
    try:
        return _RF_NAMES[rf]()
    except KeyError:
        raise ValueError(f"unknown regression function {rf!r}; use {sorted(_RF_NAMES)} "
                         "or a RegressionFunction instance") from None


class _MixtureBase(BaseEstimator):

    def _design(self, X):
        X = check_array(X, ensure_2d=True)
        if self._uses_intercept():
            X = np.column_stack([np.ones(X.shape[0]), X])
        return X

    def _uses_intercept(self):
        return bool(self.fit_intercept) and isinstance(_resolve_rf(self.rf), Linear)

    def predict(self, X):
        """Conditional mean ``E[y | x] = sum_j pi_j r(x, beta_j)``."""
        check_is_fitted(self, "measure_")
        Xd = self._design(X)
        return _resolve_rf(self.rf).mean_matrix(Xd, self.measure_.atoms) @ self.measure_.weights

    def score_samples(self, X, y):
        """Log conditional density ``log f_x(y)`` for each row."""
        check_is_fitted(self, "measure_")
        X, y = check_X_y(X, y, y_numeric=True)
        return log_fitted_vector(_resolve_rf(self.rf), self.sigma_, self.measure_, self._design(X), y)

    def score(self, X, y):
        """Mean log conditional density (higher is better)."""
        return float(np.mean(self.score_samples(X, y)))

    def posterior(self, X, y) -> PosteriorSummary:
        """Empirical Bayes posterior weights, means and MAP atoms per row."""
        check_is_fitted(self, "measure_")
        X, y = check_X_y(X, y, y_numeric=True)
        return summarize(self.measure_, _resolve_rf(self.rf), self.sigma_, self._design(X), y)


class NPMLERegressor(_MixtureBase):
    """Nonparametric maximum likelihood for a mixture of regressions.

    Parameters
    ----------
    sigma : float or "cv"
        Known noise scale, or ``"cv"`` to select it by cross-validation.
    rf : {"linear", "trigonometric"} or RegressionFunction
        Component regression function.
    fit_intercept : bool
        Prepend a constant column (linear ``rf`` only).
    domain : Domain, optional
        Coefficient domain; defaults to the box ``[-10, 10]^d``.
    max_outer_iters, gap_tolerance, num_starts : see :class:`FitConfig`.
    cv_folds : int, optional
        Folds for ``sigma="cv"``; default depends on ``n``.
    random_state : int
        Seed for the atom search, initialization and fold split.

    Attributes
    ----------
    measure_ : MixingMeasure
    sigma_ : float
    result_ : FitResult
    cv_table_ : list of (sigma, criterion), only when ``sigma="cv"``
    """

    def __init__(self, sigma: Union[float, str] = "cv", rf="linear", fit_intercept: bool = True,
                 domain: Optional[Domain] = None, max_outer_iters: int = 100,
                 gap_tolerance: float = 1e-6, num_starts: int = 20,
                 cv_folds: Optional[int] = None, random_state: int = 0):
        self.sigma = sigma
        self.rf = rf
        self.fit_intercept = fit_intercept
        self.domain = domain
        self.max_outer_iters = max_outer_iters
        self.gap_tolerance = gap_tolerance
        self.num_starts = num_starts
        self.cv_folds = cv_folds
        self.random_state = random_state

    def _fit_config(self):
        search = SearchConfig(num_starts=self.num_starts, rng_seed=self.random_state)
        return FitConfig(max_outer_iters=self.max_outer_iters, gap_tolerance=self.gap_tolerance,
                         search=search, init_seed=self.random_state,
                         init="least_squares" if isinstance(_resolve_rf(self.rf), Linear) else "random")

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        self.n_features_in_ = X.shape[1]
        rf = _resolve_rf(self.rf)
        data = Dataset(self._design(X), y, Design.RANDOM)
        domain = self.domain if self.domain is not None else Box.cube(-10.0, 10.0, rf.n_coef(data.p))
        cfg = self._fit_config()
        if isinstance(self.sigma, str):
            if self.sigma != "cv":
                raise ValueError(f"sigma must be a positive number or 'cv', got {self.sigma!r}")
            cv = CvConfig(folds=self.cv_folds, fold_seed=self.random_state, fit=cfg)
            sigma, self.cv_table_ = select_sigma(data, rf, domain, cv)
        else:
            sigma = float(self.sigma)
        self.result_ = fit_npmle(data, rf, sigma, domain, cfg)
        self.measure_ = self.result_.measure
        self.sigma_ = self.result_.sigma
        return self


class EMRegressor(_MixtureBase):
    """Finite mixture of linear regressions with a shared noise scale, fitted by EM.

    Parameters
    ----------
    n_components : int
    sigma : float, optional
        Hold the noise scale fixed instead of estimating it.
    n_init : int
        Random restarts; the highest likelihood is kept.
    """

    rf = "linear"

    def __init__(self, n_components: int = 3, sigma: Optional[float] = None,
                 fit_intercept: bool = True, n_init: int = 10, max_iter: int = 500,
                 tol: float = 1e-9, random_state: int = 0):
        self.n_components = n_components
        self.sigma = sigma
        self.fit_intercept = fit_intercept
        self.n_init = n_init
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        self.n_features_in_ = X.shape[1]
        data = Dataset(self._design(X), y, Design.RANDOM)
        cfg = EmConfig(k=self.n_components, init=RandomRestarts(self.n_init, self.random_state),
                       max_iters=self.max_iter, loglik_tol=self.tol, fixed_sigma=self.sigma)
        self.result_ = fit_em(data, cfg)
        self.measure_ = self.result_.measure
        self.sigma_ = self.result_.sigma
        return self
