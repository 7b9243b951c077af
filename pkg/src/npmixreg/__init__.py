"""Nonparametric maximum likelihood for mixtures of regressions."""

__version__ = "0.1.0"

from .cross_validation import CvConfig, cv_criterion, fold_partition, select_sigma
from .density import (atom_vector, conditional_density, fitted_vector, gradient, log_likelihood,
                      total_log_likelihood)
from .em_baseline import EmConfig, EmResult, RandomRestarts, TruePlus, fit_em
from .empirical_bayes import (PosteriorSummary, map_component, posterior_mean, posterior_weights,
                              summarize)
from .estimators import EMRegressor, NPMLERegressor
from .fw_solver import FitConfig, FitResult, curvature_diagnostic, duality_gap, fit_npmle
from .local_search import SearchConfig, SubproblemSpec, solve_subproblem, subproblem_objective
from .metrics import hellinger_fixed, hellinger_random_mc, hellinger_sq
from .model import (Ball, Box, Custom, Dataset, Design, Linear, MixingMeasure, Polynomial,
                    Trigonometric, evaluate_regression, project_to_domain)
from .simgen import Scenario, generate
from .simplex_opt import optimize_weights

__all__ = [
    "Ball", "Box", "Custom", "CvConfig", "Dataset", "Design", "EMRegressor", "EmConfig",
    "EmResult", "FitConfig", "FitResult", "Linear", "MixingMeasure", "NPMLERegressor",
    "Polynomial", "PosteriorSummary", "RandomRestarts", "Scenario", "SearchConfig",
    "SubproblemSpec", "Trigonometric", "TruePlus", "atom_vector", "conditional_density",
    "curvature_diagnostic", "cv_criterion", "duality_gap", "evaluate_regression", "fit_em",
    "fit_npmle", "fitted_vector", "fold_partition", "generate", "gradient", "hellinger_fixed",
    "hellinger_random_mc", "hellinger_sq", "log_likelihood", "map_component",
    "optimize_weights", "posterior_mean", "posterior_weights", "project_to_domain",
    "select_sigma", "solve_subproblem", "subproblem_objective", "summarize",
    "total_log_likelihood",
]
