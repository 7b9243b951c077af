"""Independent reference computations used by the tests."""

import numpy as np

from npmixreg.density import log_kernel_matrix
from npmixreg.model import Dataset, Linear
from npmixreg.simplex_opt import optimize_weights


def grid_npmle(data: Dataset, sigma: float, lo: float, hi: float, m: int = 2000):
    """NPMLE restricted to ``m`` equispaced atoms in ``[lo, hi]`` (one coefficient).

    Returns the mean log-likelihood, the grid and its weights.
    """
    grid = np.linspace(lo, hi, m)[:, None]
    LK = log_kernel_matrix(Linear(), sigma, data.X, data.y, grid)
    rowmax = LK.max(axis=1)
    res = optimize_weights(np.exp(LK - rowmax[:, None]), tol=1e-12)
    return float(np.mean(np.log(res.fitted) + rowmax)), grid[:, 0], res.weights


def intercept_only_instance(seed: int, n: int = 50):
    """Random Gaussian location mixture with unit noise, as an intercept-only regression."""
    r = np.random.default_rng(seed)
    k = int(r.integers(1, 4))
    centers = r.uniform(-4, 4, k)
    y = centers[r.integers(0, k, n)] + r.standard_normal(n)
    return Dataset(np.ones((n, 1)), y)
