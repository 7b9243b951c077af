"""Maximize the mean log-likelihood over convex combinations of columns.

Given an ``(n, m)`` matrix ``A`` with positive entries, solve

    maximize  (1/n) sum_i log((A w)_i)   subject to  w >= 0, sum(w) = 1.

The solver combines two monotone moves:

* the EM / multiplicative update ``w_j <- w_j * <A_j, grad L(Aw)>``, which
  stays on the simplex because ``<Aw, grad L(Aw)> = 1``;
* a Newton step restricted to the current support plus the most violated
  inactive columns, backtracking along the path projected onto ``w >= 0``.

Newton is tried first; the multiplicative update is the fallback. Either move is only accepted if the objective does not decrease. The
stationarity residual ``max_j <A_j, grad L> - 1`` bounds the suboptimality
and is the stopping measure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PRUNE_TOL = 1e-12
N_ENTERING = 5
NULL_TOL = 1e-6
GAIN_NOISE = 16 * np.finfo(float).eps


@dataclass(frozen=True)
class WeightResult:
    weights: np.ndarray
    fitted: np.ndarray
    residual: float
    converged: bool
    n_iter: int
    loglik_trace: tuple

    def __iter__(self):
        # allows ``w, f = optimize_weights(...)``
        return iter((self.weights, self.fitted))


def stationarity(A, w):
    """``max_j <A_j, grad L(Aw)> - <Aw, grad L(Aw)>`` and the column scores."""
    f = A @ w
    g = 1.0 / (A.shape[0] * f)
    scores = A.T @ g
    return float(scores.max() - f @ g), scores


def _newton_direction(A, f, support, resid):
    # ridge proportional to the residual: near-duplicate columns make the
    # Hessian almost singular, and the ridge vanishes as we converge
    n = A.shape[0]
    As = A[:, support] / f[:, None]
    grad = As.sum(axis=0) / n
    H = -(As.T @ As) / n
    k = support.size
    lam = min(0.1, 10.0 * max(resid, 0.0)) * np.trace(-H) / k
    H -= lam * np.eye(k)
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = H
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.concatenate([-grad, [0.0]])
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:k]


def _gain(A, w_new, f):
    """``L(A w_new) - L(f)`` computed without cancellation."""
    f_new = A @ w_new
    if np.any(f_new <= 0):
        return -np.inf, f_new
    with np.errstate(divide="ignore"):
        return float(np.mean(np.log1p((f_new - f) / f))), f_new


def _newton_step(A, w, f, support, resid):
    """Projected-path Newton step on ``support``; ``None`` if nothing improves."""
    d = _newton_direction(A, f, support, resid)
    ws = w[support]
    t = 1.0
    for _ in range(30):
        cand = w.copy()
        cand[support] = np.maximum(ws + t * d, 0.0)
        cand /= cand.sum()
        gain, f_new = _gain(A, cand, f)
        if gain > 0:
            return cand, f_new
        # near the optimum the true gain drops below the rounding noise of
        # the mean; a step within that noise that lowers the residual counts
        if gain >= -GAIN_NOISE and stationarity(A, cand)[0] < resid:
            return cand, f_new
        t *= 0.5
    return None, f


def caratheodory_reduce(A, w):
    """Shrink the support of ``w`` towards at most ``n`` columns.

    Moves along (near-)null directions of the stacked support columns and the
    all-ones row, which leaves ``A @ w`` and ``sum(w)`` unchanged, until a
    weight hits zero. Any ``w`` reduces to ``n + 1`` columns; the last step
    to ``n`` needs a null direction, which exists at an optimum because
    every support column then scores exactly one against the gradient.
    """
    w = w.copy()
    n = A.shape[0]
    while np.count_nonzero(w) > n:
        S = np.flatnonzero(w)
        M = np.vstack([A[:, S], np.ones(S.size)])
        _, sv, Vt = np.linalg.svd(M)
        if S.size <= n + 1 and sv[-1] > NULL_TOL * sv[0]:
            break
        v = Vt[-1]
        if v.max() <= 0:
            v = -v
        pos = v > 0
        ratios = np.where(pos, w[S] / np.where(pos, v, 1.0), np.inf)
        r = int(np.argmin(ratios))
        ws = np.maximum(w[S] - ratios[r] * v, 0.0)
        ws[r] = 0.0
        w[S] = ws
        w /= w.sum()
    return w


def optimize_weights(columns, tol: float = 1e-10, max_iters: int = 10000, w0=None,
                     check_monotone: bool = False) -> WeightResult:
    """Fully-corrective weight re-optimization over the probability simplex.

    Parameters
    ----------
    columns : array of shape (n, m)
        Nonnegative candidate fitted vectors, one per column; the
        starting weights must give a positive fitted vector.
    tol : float
        Target for the stationarity residual.
    max_iters : int
        Iteration cap; hitting it returns the best iterate with
        ``converged=False``.
    w0 : array of shape (m,), optional
        Feasible starting weights (uniform by default).
    check_monotone : bool
        Assert that the objective never decreases between iterations.

    Returns
    -------
    WeightResult
        Unpacks as ``(weights, fitted)``.
    """
    A = np.asarray(columns, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    n, m = A.shape
    if m < 1:
        raise ValueError("need at least one column")
    if not (np.all(np.isfinite(A)) and np.all(A >= 0)):
        raise ValueError("columns must be finite and nonnegative")
    if tol <= 0:
        raise ValueError("tol must be positive")

    if w0 is None:
        # start at the best single column; the violator rule grows the support
        w = np.zeros(m)
        with np.errstate(divide="ignore"):
            best = int(np.argmax(np.log(A).mean(axis=0)))
        w[best] = 1.0 if np.all(A[:, best] > 0) else 0.0
        if w.sum() == 0:
            w[:] = 1.0 / m
    else:
        w = np.asarray(w0, dtype=float).copy()
        if w.shape != (m,) or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("w0 must be nonnegative with positive sum")
        w /= w.sum()

    f = A @ w
    if not np.all(f > 0):
        raise ValueError("starting weights give a zero fitted entry")
    trace = [float(np.mean(np.log(f)))]
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        resid, scores = stationarity(A, w)
        if resid <= tol:
            converged = True
            it -= 1
            break
        # Newton on the support plus the most violated inactive columns
        support = np.flatnonzero(w > 0)
        viol = np.flatnonzero((scores - 1.0 > tol) & (w == 0))
        if viol.size:
            top = viol[np.argsort(-scores[viol], kind="stable")[:N_ENTERING]]
            support = np.union1d(support, top)
        w_new, f_new = _newton_step(A, w, f, support, resid)
        if w_new is None:
            # multiplicative update as fallback
            w_em = w * scores
            w_em /= w_em.sum()
            gain, f_em = _gain(A, w_em, f)
            if gain > 0:
                w_new, f_new = w_em, f_em
        if w_new is None:
            # no representable improvement left
            break
        w, f = w_new, f_new
        L = float(np.mean(np.log(f)))
        if check_monotone:
            assert L >= trace[-1] - 1e-13, (L, trace[-1])
        trace.append(L)

    # active-set cleanup
    w_clean = np.where(w < PRUNE_TOL, 0.0, w)
    w_clean /= w_clean.sum()
    gain, _ = _gain(A, w_clean, f)
    if gain >= -1e-14 and stationarity(A, w_clean)[0] <= max(tol, stationarity(A, w)[0]):
        w = w_clean
    if np.count_nonzero(w) > n:
        w = caratheodory_reduce(A, w)
    resid, _ = stationarity(A, w)
    return WeightResult(
        weights=w,
        fitted=A @ w,
        residual=resid,
        converged=bool(converged or resid <= tol),
        n_iter=it,
        loglik_trace=tuple(trace),
    )
