"""Multi-start derivative-free search for the atom-selection subproblem.

Each outer iteration of the conditional gradient solver must find the
coefficient vector maximizing a gradient-weighted sum of Gaussian kernels,

    h(beta) = sum_i w_i * (1/sigma) * phi((y_i - r(x_i, beta)) / sigma),

over the compact domain. ``h`` is non-convex with many local maxima, so we
run Powell's conjugate-direction method from several starting points and keep
the best. All starts advance in lockstep so the kernel evaluations for every
start share one vectorized call; each start's trajectory depends only on its
own state, so results do not depend on how many starts run alongside it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .density import LOG_SQRT_2PI
from .model import Dataset, Domain, Linear, RegressionFunction, check_sigma

CGOLD = 0.5 * (3.0 - math.sqrt(5.0))


@dataclass(frozen=True)
class SearchConfig:
    """Settings for :func:`solve_subproblem`.

    ``line_scan_points`` is the number of equispaced probes along a search
    line used to bracket maxima; ``max_golden_iters`` caps the Brent
    (golden-section with parabolic steps) refinement of each bracket.
    """

    num_starts: int = 20
    max_local_iters: int = 200
    x_tolerance: float = 1e-7
    f_tolerance: float = 1e-10
    rng_seed: int = 0
    line_scan_points: int = 32
    max_golden_iters: int = 60

    def __post_init__(self):
        for name in ("num_starts", "max_local_iters", "line_scan_points", "max_golden_iters"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if not (self.x_tolerance > 0 and self.f_tolerance > 0):
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class SubproblemSpec:
    weights: np.ndarray
    data: Dataset
    rf: RegressionFunction
    sigma: float
    domain: Domain

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.data.n,):
            raise ValueError(f"weights have shape {w.shape}, expected ({self.data.n},)")
        if not np.all(w > 0):
            raise ValueError("subproblem weights must be strictly positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "sigma", check_sigma(self.sigma))
        # log(w_i / (sigma sqrt(2 pi))), folded into the exponent
        object.__setattr__(self, "_log_scale", np.log(w) - LOG_SQRT_2PI - math.log(self.sigma))

    def values(self, B: np.ndarray) -> np.ndarray:
        """Objective at each row of ``B`` (m, d)."""
        B = np.asarray(B, dtype=float)
        single = B.shape[0] == 1
        if single:
            # a lone column would be summed pairwise; duplicate it so every
            # batch size uses the same row-by-row accumulation order
            B = np.vstack([B, B])
        R = np.array(self.rf.mean_matrix(self.data.X, B), dtype=float)
        np.subtract(self.data.y[:, None], R, out=R)
        np.square(R, out=R)
        R *= -0.5 / (self.sigma * self.sigma)
        R += self._log_scale[:, None]
        np.exp(R, out=R)
        # column sums accumulate row by row, so each column's value is
        # independent of the batch it was computed in
        out = R.sum(axis=0)
        return out[:1] if single else out


def subproblem_objective(spec: SubproblemSpec, beta) -> float:
    """``sum_i w_i (1/sigma) phi((y_i - r(x_i, beta))/sigma)`` at one point."""
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    spec.rf.check_dims(spec.data.X, beta)
    s = spec.sigma
    z = (spec.data.y - spec.rf.mean_matrix(spec.data.X, beta)[:, 0]) / s
    logterms = np.log(spec.weights) - 0.5 * z * z - LOG_SQRT_2PI - math.log(s)
    return math.fsum(np.exp(logterms))


def least_squares_start(data: Dataset, rf: RegressionFunction, domain: Domain):
    """Projected least-squares coefficients, or ``None`` for nonlinear ``rf``."""
    if isinstance(rf, Linear):
        beta = np.linalg.lstsq(data.X, data.y, rcond=None)[0]
        return domain.project(beta)
    basis = getattr(rf, "basis", None)
    if basis is not None:
        beta = np.linalg.lstsq(basis(data.X), data.y, rcond=None)[0]
        return domain.project(beta)
    return None


def start_points(spec: SubproblemSpec, cfg: SearchConfig, warm_starts=None) -> np.ndarray:
    """Initial points: warm starts, the least-squares fit, then uniform draws.

    Warm starts (typically the current atoms) come first, best objective
    first, at most half of ``cfg.num_starts`` of them. Uniform start
    ``i`` draws from its own generator seeded by ``(rng_seed, i)``, so a
    longer start list extends a shorter one.
    """
    d = spec.domain.dim
    fixed = []
    if warm_starts is not None and len(warm_starts):
        W = spec.domain.project(np.atleast_2d(np.asarray(warm_starts, dtype=float)))
        order = np.argsort(-spec.values(W), kind="stable")
        fixed.extend(W[order[: max(1, cfg.num_starts // 2)]])
    ls = least_squares_start(spec.data, spec.rf, spec.domain)
    if ls is not None:
        fixed.append(ls)
    pts = np.empty((cfg.num_starts, d))
    for i in range(pts.shape[0]):
        if i < len(fixed):
            pts[i] = fixed[i]
        else:
            rng = np.random.default_rng([int(cfg.rng_seed) & 0xFFFFFFFFFFFFFFFF, i])
            pts[i] = spec.domain.sample(rng, 1)[0]
    return pts


class _BatchedPowell:
    """Lockstep Powell maximization of ``spec.values`` from several starts."""

    def __init__(self, spec: SubproblemSpec, cfg: SearchConfig):
        self.spec = spec
        self.cfg = cfg
        self.domain = spec.domain

    def f(self, B):
        return self.spec.values(self.domain.project(B))

    def line_max(self, B, F, U):
        """Maximize along unit directions ``U`` from ``B``; never worsens ``F``.

        An equispaced scan over the domain chord brackets the best probe; a
        second bracket is the scan interval around the current point, so a
        nearby local maximum is refined even when a distant probe scores
        higher. Both brackets are refined by Brent's method and the better
        result is kept.
        """
        m, d = B.shape
        norms = np.linalg.norm(U, axis=1)
        moving = norms > 0
        U = np.where(moving[:, None], U / np.where(moving, norms, 1.0)[:, None], 0.0)
        lo, hi = self.domain.chord(B, U)
        lo = np.where(moving, lo, 0.0)
        hi = np.where(moving, hi, 0.0)
        G = self.cfg.line_scan_points
        s = np.linspace(0.0, 1.0, G)
        T = np.concatenate([lo[:, None] + (hi - lo)[:, None] * s[None, :], np.zeros((m, 1))], axis=1)
        T.sort(axis=1)
        P = B[:, None, :] + T[:, :, None] * U[:, None, :]
        V = self.f(P.reshape(-1, d)).reshape(m, G + 1)
        rows = np.arange(m)
        j = np.argmax(V, axis=1)
        # index of t = 0 (the last zero if the chord is degenerate)
        j0 = np.argmax(np.where(T == 0.0, np.arange(G + 1)[None, :], -1), axis=1)

        def bracket(k):
            return T[rows, np.maximum(k - 1, 0)], T[rows, np.minimum(k + 1, G)], T[rows, k], V[rows, k]

        ga, gb, gx, gf = bracket(j)
        la, lb, lx, lf = bracket(j0)
        BB = np.concatenate([B, B])
        UU = np.concatenate([U, U])
        t, v = self._brent(BB, UU, np.concatenate([ga, la]), np.concatenate([gb, lb]),
                           np.concatenate([gx, lx]), np.concatenate([gf, lf]))
        pick = v[m:] > v[:m]
        best_t = np.where(pick, t[m:], t[:m])
        best_v = np.where(pick, v[m:], v[:m])

        improve = moving & (best_v > F)
        B_new = np.where(improve[:, None], self.domain.project(B + best_t[:, None] * U), B)
        F_new = np.where(improve, best_v, F)
        return B_new, F_new

    def _brent(self, B, U, a, b, x, fx):
        """Row-wise Brent maximization of ``t -> f(B + t U)`` on ``[a, b]``.

        ``x`` is an interior point with known value ``fx``. Returns the best
        visited ``t`` and its value for every row.
        """
        tol1 = 0.5 * self.cfg.x_tolerance
        tol2 = 2.0 * tol1
        # minimize g = -f
        gx = -fx
        w, v, gw, gv = x.copy(), x.copy(), gx.copy(), gx.copy()
        d = np.zeros_like(x)
        e = np.zeros_like(x)
        active = b - a > tol2
        for _ in range(self.cfg.max_golden_iters):
            xm = 0.5 * (a + b)
            active &= np.abs(x - xm) > tol2 - 0.5 * (b - a)
            if not active.any():
                break
            golden_e = np.where(x >= xm, a - x, b - x)
            r = (x - w) * (gx - gv)
            q = (x - v) * (gx - gw)
            p = (x - v) * q - (x - w) * r
            q = 2.0 * (q - r)
            p = np.where(q > 0, -p, p)
            q = np.abs(q)
            with np.errstate(divide="ignore", invalid="ignore"):
                para_ok = ((np.abs(e) > tol1) & (np.abs(p) < np.abs(0.5 * q * e))
                           & (p > q * (a - x)) & (p < q * (b - x)))
                d_para = np.where(para_ok, p / np.where(q > 0, q, 1.0), 0.0)
            u_para = x + d_para
            near_edge = (u_para - a < tol2) | (b - u_para < tol2)
            d_para = np.where(near_edge, np.copysign(tol1, xm - x), d_para)
            e_new = np.where(para_ok, d, golden_e)
            d_new = np.where(para_ok, d_para, CGOLD * golden_e)
            e = np.where(active, e_new, e)
            d = np.where(active, d_new, d)
            u = x + np.where(np.abs(d) >= tol1, d, np.copysign(tol1, d))
            idx = np.flatnonzero(active)
            gu = np.full_like(x, np.inf)
            gu[idx] = -self.f(B[idx] + u[idx, None] * U[idx])
            better = active & (gu <= gx)
            worse = active & ~better
            # bracket update
            a = np.where(better & (u >= x), x, np.where(worse & (u < x), u, a))
            b = np.where(better & (u < x), x, np.where(worse & (u >= x), u, b))
            # remember the three best points
            upd_w = worse & ((gu <= gw) | (w == x))
            upd_v = worse & ~upd_w & ((gu <= gv) | (v == x) | (v == w))
            v_new = np.where(better | upd_w, w, np.where(upd_v, u, v))
            gv_new = np.where(better | upd_w, gw, np.where(upd_v, gu, gv))
            w_new = np.where(better, x, np.where(upd_w, u, w))
            gw_new = np.where(better, gx, np.where(upd_w, gu, gw))
            x = np.where(better, u, x)
            gx = np.where(better, gu, gx)
            v, gv, w, gw = v_new, gv_new, w_new, gw_new
        return x, -gx

    def run(self, B0):
        cfg = self.cfg
        B = self.domain.project(np.array(B0, dtype=float))
        m, d = B.shape
        F = self.f(B)
        D = np.broadcast_to(np.eye(d), (m, d, d)).copy()
        active = np.ones(m, dtype=bool)
        for it in range(cfg.max_local_iters):
            if not active.any():
                break
            idx = np.flatnonzero(active)
            Ba, Fa, Da = B[idx], F[idx], D[idx]
            B_start, F_start = Ba.copy(), Fa.copy()
            big_gain = np.zeros(idx.size)
            big_dir = np.zeros(idx.size, dtype=int)
            for k in range(d):
                F_before = Fa
                Ba, Fa = self.line_max(Ba, Fa, Da[:, k, :])
                gain = Fa - F_before
                upd = gain > big_gain
                big_gain = np.where(upd, gain, big_gain)
                big_dir = np.where(upd, k, big_dir)

            f_conv = 2.0 * (Fa - F_start) <= cfg.f_tolerance * (np.abs(F_start) + np.abs(Fa)) + 1e-300
            x_conv = np.linalg.norm(Ba - B_start, axis=1) <= cfg.x_tolerance
            done = f_conv | x_conv

            # Powell's direction-set update, written for maximization
            step = Ba - B_start
            extrap = self.domain.project(Ba + step)
            F_ext = self.f(extrap)
            t = (2.0 * (F_start + F_ext - 2.0 * Fa) * (Fa - F_start - big_gain) ** 2
                 - big_gain * (F_ext - F_start) ** 2)
            swap = (~done) & (F_ext > F_start) & (t < 0) & (np.linalg.norm(step, axis=1) > 0)
            if swap.any():
                sidx = np.flatnonzero(swap)
                Bs, Fs = self.line_max(Ba[sidx], Fa[sidx], step[sidx])
                Ba[sidx], Fa[sidx] = Bs, Fs
                for r, k in zip(sidx, big_dir[sidx]):
                    Da[r, k] = Da[r, d - 1]
                    Da[r, d - 1] = step[r] / np.linalg.norm(step[r])
            if (it + 1) % (d + 1) == 0:
                # periodic reset keeps the direction set from degenerating
                Da[:] = np.eye(d)

            B[idx], F[idx], D[idx] = Ba, Fa, Da
            active[idx[done]] = False
        return B, F


def solve_subproblem(spec: SubproblemSpec, cfg: Optional[SearchConfig] = None,
                     warm_starts=None):
    """Best ``(beta, value)`` over ``cfg.num_starts`` Powell searches.

    ``warm_starts`` (e.g. the current atoms) contributes its best points as
    the first starts. The returned value is recomputed with
    :func:`subproblem_objective` at the returned, projected ``beta``.
    """
    cfg = cfg or SearchConfig()
    B0 = start_points(spec, cfg, warm_starts)
    B, F = _BatchedPowell(spec, cfg).run(B0)
    best = int(np.argmax(F))
    beta = spec.domain.project(B[best])
    return beta, subproblem_objective(spec, beta)
