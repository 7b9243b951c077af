"""Fully-corrective conditional gradient (Frank-Wolfe) solver for the NPMLE.

The likelihood depends on the mixing measure only through the fitted vector
``f = (f^G_{x_1}(y_1), ..., f^G_{x_n}(y_n))``, which ranges over the convex
hull of single-atom vectors ``f^beta``. Each iteration

1. takes the gradient ``1/(n f)`` of the mean log-likelihood,
2. searches the domain for the atom whose vector ``f^beta`` has the largest
   inner product with that gradient,
3. stops if the resulting duality gap ``<f^beta - f, grad>`` is small,
4. otherwise adds the atom and re-optimizes the weights of every atom
   collected so far (plus the initial vector, which is never dropped).

The gap bounds ``L(f_hat) - L(f)`` up to the inexactness of the atom search.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from scipy.special import logsumexp

from .density import gradient, log_kernel_matrix, log_likelihood
from .local_search import SearchConfig, SubproblemSpec, least_squares_start, solve_subproblem
from .model import Dataset, DimensionError, Domain, MixingMeasure, RegressionFunction, check_sigma
from .simplex_opt import optimize_weights

logger = logging.getLogger(__name__)

INIT_KINDS = ("least_squares", "random")


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class FitConfig:
    """Settings for :func:`fit_npmle`.

    ``init`` is ``"least_squares"`` (projected least-squares atom; falls back
    to a random atom for regression functions without a linear basis) or
    ``"random"`` (a uniform atom drawn with ``init_seed``). The solver also
    stops when the log-likelihood gained over ``stall_window`` iterations is
    below ``stall_tolerance``.
    """

    max_outer_iters: int = 100
    gap_tolerance: float = 1e-6
    merge_tolerance: float = 1e-4
    search: SearchConfig = field(default_factory=SearchConfig)
    simplex_tol: float = 1e-10
    simplex_max_iters: int = 10000
    init: str = "least_squares"
    init_seed: int = 0
    stall_window: int = 5
    stall_tolerance: float = 1e-10

    def __post_init__(self):
        if self.init not in INIT_KINDS:
            raise ValueError(f"init must be one of {INIT_KINDS}, got {self.init!r}")
        if self.max_outer_iters < 1 or self.simplex_max_iters < 1 or self.stall_window < 1:
            raise ValueError("iteration limits must be positive")
        if not (self.gap_tolerance > 0 and self.merge_tolerance >= 0 and self.simplex_tol > 0):
            raise ValueError("tolerances must be positive")

    def with_seed(self, seed: int) -> "FitConfig":
        """Same settings with both the search and the init seed replaced."""
        return replace(self, init_seed=seed, search=replace(self.search, rng_seed=seed))


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    loglik: float
    gap: float
    gap_raw: float
    atom: tuple
    subproblem_value: float
    psi: float
    n_atoms: int
    simplex_residual: float
    simplex_converged: bool


@dataclass(frozen=True)
class FitResult:
    """Output of :func:`fit_npmle`.

    ``log_fitted`` holds ``log f_hat`` per observation; ``total_loglik`` is
    its sum and ``loglik`` its mean.
    """

    measure: MixingMeasure
    sigma: float
    log_fitted: np.ndarray
    trace: tuple
    converged: bool
    stop_reason: str
    total_loglik: float

    @property
    def fitted(self) -> np.ndarray:
        return np.exp(self.log_fitted)

    @property
    def loglik(self) -> float:
        return float(np.mean(self.log_fitted))

    @property
    def max_psi(self) -> float:
        vals = [r.psi for r in self.trace if np.isfinite(r.psi)]
        return max(vals) if vals else float("nan")


def duality_gap(f, g_best) -> float:
    """``<g_best - f, grad L(f)> = (1/n) sum_i (g_i - f_i) / f_i``."""
    f = np.asarray(f, dtype=float)
    g_best = np.asarray(g_best, dtype=float)
    return float(np.dot(g_best - f, gradient(f)))


def curvature_diagnostic(fk, g_k, k: int) -> float:
    """Curvature constant ``Psi_k`` with step ``gamma_k = 2/(k+2)``.

    ``(2/gamma^2) [L(f) + gamma <g - f, grad L(f)> - L((1-gamma) f + gamma g)]``.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    fk = np.asarray(fk, dtype=float)
    g_k = np.asarray(g_k, dtype=float)
    gamma = 2.0 / (k + 2.0)
    mix = (1.0 - gamma) * fk + gamma * g_k
    slack = log_likelihood(fk) + gamma * duality_gap(fk, g_k) - log_likelihood(mix)
    return float(2.0 / gamma**2 * slack)


def _child_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, k]).generate_state(1, np.uint64)[0])


def initial_atom(data: Dataset, rf: RegressionFunction, domain: Domain, cfg: FitConfig) -> np.ndarray:
    if cfg.init == "least_squares":
        beta = least_squares_start(data, rf, domain)
        if beta is not None:
            return beta
    rng = np.random.default_rng(cfg.init_seed)
    return domain.sample(rng, 1)[0]


def _log_gap(logf, logg) -> float:
    # <g - f, grad L(f)> from log densities; overflows to inf when g dominates
    with np.errstate(over="ignore"):
        return float(np.exp(logsumexp(logg - logf) - np.log(logf.shape[0])) - 1.0)


def _fw_step(logf, logg):
    """Best mixing fraction of the new column on a dyadic grid (log domain)."""
    best_gamma, best_L = 0.0, float(np.mean(logf))
    for e in range(0, 41):
        gamma = 2.0 ** -e
        mix = np.logaddexp(np.log1p(-gamma) + logf if gamma < 1 else -np.inf, np.log(gamma) + logg)
        L = float(np.mean(mix))
        if L > best_L:
            best_gamma, best_L = gamma, L
    return best_gamma


def fit_npmle(data: Dataset, rf: RegressionFunction, sigma, domain: Domain,
              cfg: Optional[FitConfig] = None) -> FitResult:
    """Compute the NPMLE of the mixing measure by the fully-corrective CGM.

    Densities are carried as logs and every row of the candidate matrix is
    rescaled by its largest entry before the weight step; the weight problem,
    the atom search and the gap are all invariant to such row scalings, and
    the rescaling keeps small ``sigma`` from underflowing.
    """
    cfg = cfg or FitConfig()
    sigma = check_sigma(sigma)
    if rf.n_coef(data.p) != domain.dim:
        raise DimensionError(
            f"domain has dimension {domain.dim}, regression needs {rf.n_coef(data.p)} coefficients"
        )

    def log_col(beta):
        return log_kernel_matrix(rf, sigma, data.X, data.y, beta[None, :])[:, 0]

    beta0 = initial_atom(data, rf, domain, cfg)
    logf = log_col(beta0)
    if not np.all(np.isfinite(logf)):
        raise FitError("initial atom gives a non-finite log-likelihood entry")

    atoms = [beta0]  # atoms[0] carries the permanent initial column
    logcols = [logf]
    w = np.array([1.0])
    L = float(np.mean(logf))
    history = [L]
    trace = []
    simplex_resid, simplex_ok = 0.0, True
    converged = False
    stop_reason = "max_outer_iters"

    for k in range(cfg.max_outer_iters):
        # gradient 1/(n f), rescaled by a constant so it stays representable
        logw = logf.min() - logf
        spec = SubproblemSpec(np.maximum(np.exp(logw), 1e-300), data, rf, sigma, domain)
        search = replace(cfg.search, rng_seed=_child_seed(cfg.search.rng_seed, k))
        live = [a for a, wj in zip(atoms, w) if wj > 0]
        beta_new, value = solve_subproblem(spec, search, warm_starts=np.array(live))
        logg = log_col(beta_new)
        gap_raw = _log_gap(logf, logg)
        psi = _log_curvature(logf, logg, k)
        trace.append(TraceRecord(
            iteration=k, loglik=L, gap=max(gap_raw, 0.0), gap_raw=gap_raw,
            atom=tuple(float(b) for b in beta_new),
            subproblem_value=_unscale(value, logf.min(), data.n),
            psi=psi, n_atoms=int(np.count_nonzero(w)), simplex_residual=simplex_resid,
            simplex_converged=simplex_ok,
        ))
        logger.debug("iter %d  L=%.10f  gap=%.3e  atoms=%d", k, L, gap_raw, np.count_nonzero(w))
        if gap_raw <= cfg.gap_tolerance:
            converged = True
            stop_reason = "gap"
            break

        w0 = w
        dists = np.linalg.norm(np.array(atoms) - beta_new, axis=1)
        if dists.min() >= cfg.merge_tolerance:
            atoms.append(beta_new)
            logcols.append(logg)
            w = np.append(w, 0.0)
            # a plain Frank-Wolfe step first, so the start has no underflowed rows
            gamma = _fw_step(logf, logg)
            w0 = np.append((1.0 - gamma) * w[:-1], gamma)
        LC = np.column_stack(logcols)
        rowmax = LC.max(axis=1)
        A = np.exp(LC - rowmax[:, None])
        res = optimize_weights(A, tol=cfg.simplex_tol, max_iters=cfg.simplex_max_iters, w0=w0)
        simplex_resid, simplex_ok = res.residual, res.converged
        with np.errstate(divide="ignore"):
            logf_new = np.log(res.fitted) + rowmax
        L_new = float(np.mean(logf_new))
        if L_new >= L:
            w, logf, L = res.weights, logf_new, L_new

        # pruned atoms go for good; the initial column stays
        keep = [0] + [j for j in range(1, len(atoms)) if w[j] > 0]
        atoms = [atoms[j] for j in keep]
        logcols = [logcols[j] for j in keep]
        w = w[keep]

        history.append(L)
        win = cfg.stall_window
        if len(history) > win and history[-1] - history[-1 - win] < cfg.stall_tolerance:
            stop_reason = "stalled"
            break

    mask = w > 0
    measure = MixingMeasure(np.array(atoms)[mask], w[mask] / w[mask].sum())
    return FitResult(
        measure=measure,
        sigma=sigma,
        log_fitted=logf,
        trace=tuple(trace),
        converged=converged,
        stop_reason=stop_reason,
        total_loglik=float(np.sum(logf)),
    )


def _unscale(value, shift, n):
    with np.errstate(over="ignore"):
        return float(value * np.exp(-shift) / n)


def _log_curvature(logf, logg, k):
    gamma = 2.0 / (k + 2.0)
    L = float(np.mean(logf))
    gap = _log_gap(logf, logg)
    if not np.isfinite(gap):
        return float("nan")
    if gamma == 1.0:
        L_mix = float(np.mean(logg))
    else:
        L_mix = float(np.mean(np.logaddexp(np.log1p(-gamma) + logf, np.log(gamma) + logg)))
    return float(2.0 / gamma**2 * (L + gamma * gap - L_mix))
