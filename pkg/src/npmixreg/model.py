"""Domain types shared across the package.

A mixture of regressions is described by three pieces:

* a :class:`Dataset` of covariate rows ``x_i`` and scalar responses ``y_i``;
* a :class:`RegressionFunction` ``r(x, beta)`` mapping a covariate and a
  coefficient vector to the conditional mean;
* a :class:`MixingMeasure`, a finite list of coefficient vectors (atoms) with
  probabilities, drawn from a compact parameter :class:`Domain`.

All objects are immutable after construction; the arrays they hold are
flagged read-only.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

WEIGHT_RENORM_TOL = 1e-8
WEIGHT_SUM_TOL = 1e-10
DOMAIN_SLACK = 1e-9


class DimensionError(ValueError):
    """Raised when an argument has the wrong dimension."""


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def check_sigma(sigma) -> float:
    """Validate a noise scale and return it as a float."""
    s = float(sigma)
    if not (math.isfinite(s) and s > 0):
        raise ValueError(f"sigma must be positive and finite, got {sigma!r}")
    return s


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------


class Design(enum.Enum):
    FIXED = "fixed"
    RANDOM = "random"


@dataclass(frozen=True)
class Dataset:
    """Paired covariates ``X`` (n, p) and responses ``y`` (n,)."""

    X: np.ndarray
    y: np.ndarray
    design: Design = Design.FIXED

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim != 2:
            raise DimensionError(f"covariates must be 2-D, got shape {X.shape}")
        n, p = X.shape
        if n < 1 or p < 1:
            raise DimensionError(f"need n >= 1 and p >= 1, got shape {X.shape}")
        if y.shape[0] != n:
            raise DimensionError(f"responses have length {y.shape[0]}, covariates have {n} rows")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains non-finite entries")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "design", Design(self.design))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def max_covariate_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.X, axis=1)))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.y[idx], self.design)

    @classmethod
    def with_intercept(cls, x, y, design=Design.FIXED) -> "Dataset":
        """Build a dataset whose rows are ``(1, x)``."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        return cls(np.column_stack([np.ones(x.shape[0]), x]), y, design)


# ---------------------------------------------------------------------------
# Parameter domain K
# ---------------------------------------------------------------------------


class Domain:
    """Compact convex set of admissible coefficient vectors."""

    dim: int

    def project(self, beta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def contains(self, beta, slack: float = DOMAIN_SLACK) -> bool:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def chord(self, beta: np.ndarray, direction: np.ndarray):
        """Interval ``[lo, hi]`` of ``t`` with ``beta + t*direction`` inside.

        Works row-wise on stacked ``beta``/``direction`` of shape (m, d).
        """
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_dict(d: dict) -> "Domain":
        if d["kind"] == "box":
            return Box(d["lower"], d["upper"])
        if d["kind"] == "ball":
            return Ball(d["center"], d["radius"])
        raise ValueError(f"unknown domain kind {d['kind']!r}")


@dataclass(frozen=True)
class Box(Domain):
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionError("box bounds must be 1-D vectors of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("unbounded domains are not supported")
        if not np.all(lo < hi):
            raise ValueError("box requires lower < upper coordinatewise")
        object.__setattr__(self, "lower", _frozen(lo))
        object.__setattr__(self, "upper", _frozen(hi))

    @classmethod
    def cube(cls, lo: float, hi: float, dim: int) -> "Box":
        return cls(np.full(dim, lo), np.full(dim, hi))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def project(self, beta):
        return np.clip(np.asarray(beta, dtype=float), self.lower, self.upper)

    def contains(self, beta, slack=DOMAIN_SLACK):
        b = np.asarray(beta, dtype=float)
        return bool(np.all(b >= self.lower - slack) and np.all(b <= self.upper + slack))

    def sample(self, rng, size):
        return rng.uniform(self.lower, self.upper, size=(size, self.dim))

    def chord(self, beta, direction):
        beta = np.atleast_2d(beta)
        u = np.atleast_2d(direction)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            t1 = (self.lower - beta) / u
            t2 = (self.upper - beta) / u
        moving = u != 0
        lo = np.where(moving, np.minimum(t1, t2), -np.inf).max(axis=1)
        hi = np.where(moving, np.maximum(t1, t2), np.inf).min(axis=1)
        return _clamp_chord(lo, hi)

    def to_dict(self):
        return {"kind": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass(frozen=True)
class Ball(Domain):
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        r = float(self.radius)
        if not (math.isfinite(r) and r > 0):
            raise ValueError("ball radius must be positive and finite")
        if not np.all(np.isfinite(c)):
            raise ValueError("ball center must be finite")
        object.__setattr__(self, "center", _frozen(c))
        object.__setattr__(self, "radius", r)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def project(self, beta):
        b = np.asarray(beta, dtype=float)
        d = b - self.center
        norm = np.linalg.norm(d, axis=-1, keepdims=True)
        # points already projected may sit a few ulps outside; leave them be
        # so that projection is idempotent
        slack = 4 * np.finfo(float).eps * (self.radius + np.abs(self.center).max())
        scale = np.where(norm > self.radius + slack, self.radius / np.where(norm > 0, norm, 1.0), 1.0)
        return self.center + d * scale

    def contains(self, beta, slack=DOMAIN_SLACK):
        d = np.asarray(beta, dtype=float) - self.center
        return bool(np.all(np.linalg.norm(np.atleast_2d(d), axis=1) <= self.radius + slack))

    def sample(self, rng, size):
        out = np.empty((0, self.dim))
        while out.shape[0] < size:
            cand = rng.uniform(-self.radius, self.radius, size=(2 * size, self.dim))
            cand = cand[np.linalg.norm(cand, axis=1) <= self.radius]
            out = np.vstack([out, cand])
        return self.center + out[:size]

    def chord(self, beta, direction):
        d = np.atleast_2d(beta) - self.center
        u = np.atleast_2d(direction)
        a = np.einsum("ij,ij->i", u, u)
        b = 2.0 * np.einsum("ij,ij->i", d, u)
        c = np.einsum("ij,ij->i", d, d) - self.radius**2
        disc = np.maximum(b * b - 4 * a * c, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            lo = np.where(a > 0, (-b - np.sqrt(disc)) / (2 * a), 0.0)
            hi = np.where(a > 0, (-b + np.sqrt(disc)) / (2 * a), 0.0)
        return _clamp_chord(lo, hi)

    def to_dict(self):
        return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}


def _clamp_chord(lo, hi):
    # tiny directions overflow t; a shorter interval stays feasible by convexity
    big = np.finfo(float).max
    return np.clip(lo, -big, 0.0), np.clip(hi, 0.0, big)


def project_to_domain(domain: Domain, beta) -> np.ndarray:
    """Euclidean projection of ``beta`` onto ``domain``."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape[-1] != domain.dim:
        raise DimensionError(f"beta has dimension {beta.shape[-1]}, domain has {domain.dim}")
    return domain.project(beta)


# ---------------------------------------------------------------------------
# Regression functions r(x, beta)
# ---------------------------------------------------------------------------


class RegressionFunction:
    """Mean function ``r(x, beta)``.

    Subclasses implement :meth:`mean_matrix`, the batched evaluation
    returning an ``(n, m)`` matrix for covariates ``X`` (n, p) and
    coefficients ``B`` (m, p̄).
    """

    name = "custom"

    def n_coef(self, p: int) -> int:
        raise NotImplementedError

    def mean_matrix(self, X: np.ndarray, B: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def lipschitz(self, X: np.ndarray) -> Optional[float]:
        return None

    def check_dims(self, X: np.ndarray, B: np.ndarray):
        if B.shape[-1] != self.n_coef(X.shape[-1]):
            raise DimensionError(
                f"beta has dimension {B.shape[-1]}, {self.name} regression on "
                f"p={X.shape[-1]} covariates expects {self.n_coef(X.shape[-1])}"
            )

    def to_dict(self) -> dict:
        return {"kind": self.name}

    @staticmethod
    def from_dict(d: dict) -> "RegressionFunction":
        kind = d["kind"]
        if kind == "linear":
            return Linear()
        if kind == "polynomial":
            return Polynomial(int(d["degree"]))
        if kind == "trigonometric":
            return Trigonometric()
        raise ValueError(f"cannot rebuild regression function of kind {kind!r}")


class Linear(RegressionFunction):
    """``r(x, beta) = <x, beta>``; intercepts live in the covariates."""

    name = "linear"

    def n_coef(self, p):
        return p

    def mean_matrix(self, X, B):
        return X @ B.T

    def lipschitz(self, X):
        return float(np.max(np.linalg.norm(X, axis=1)))

    def __eq__(self, other):
        return type(other) is Linear

    def __hash__(self):
        return hash(self.name)


class Polynomial(RegressionFunction):
    """``r(x, beta) = sum_k beta_k x**k`` for scalar ``x``, ``k = 0..degree``."""

    name = "polynomial"

    def __init__(self, degree: int):
        if degree < 0:
            raise ValueError("degree must be nonnegative")
        self.degree = int(degree)

    def n_coef(self, p):
        if p != 1:
            raise DimensionError("polynomial regression takes a scalar covariate")
        return self.degree + 1

    def basis(self, X):
        return np.vander(np.asarray(X, dtype=float)[:, 0], self.degree + 1, increasing=True)

    def mean_matrix(self, X, B):
        return self.basis(X) @ B.T

    def lipschitz(self, X):
        return float(np.max(np.linalg.norm(self.basis(X), axis=1)))

    def to_dict(self):
        return {"kind": self.name, "degree": self.degree}

    def __eq__(self, other):
        return isinstance(other, Polynomial) and other.degree == self.degree

    def __hash__(self):
        return hash((self.name, self.degree))


class Trigonometric(RegressionFunction):
    """``r(x, beta) = beta_1 + sin(beta_2 * x)`` for scalar ``x``."""

    name = "trigonometric"

    def n_coef(self, p):
        if p != 1:
            raise DimensionError("trigonometric regression takes a scalar covariate")
        return 2

    def mean_matrix(self, X, B):
        x = X[:, :1]
        return B[:, 0][None, :] + np.sin(x * B[:, 1][None, :])

    def lipschitz(self, X):
        # gradient wrt beta is (1, x cos(beta_2 x))
        return float(np.sqrt(1.0 + np.max(X[:, 0] ** 2)))

    def __eq__(self, other):
        return type(other) is Trigonometric

    def __hash__(self):
        return hash(self.name)


class Custom(RegressionFunction):
    """Wrap a user function ``func(x, beta) -> float``.

    ``func`` is called per pair unless ``vectorized=True``, in which case it
    receives ``X`` (n, p) and ``B`` (m, p̄) and must return (n, m).
    ``lipschitz_hint`` is only reported, never used.
    """

    name = "custom"

    def __init__(self, func: Callable, dim: int, lipschitz_hint: Optional[float] = None,
                 vectorized: bool = False):
        self.func = func
        self.dim = int(dim)
        self.lipschitz_hint = lipschitz_hint
        self.vectorized = vectorized

    def n_coef(self, p):
        return self.dim

    def mean_matrix(self, X, B):
        if self.vectorized:
            return np.asarray(self.func(X, B), dtype=float)
        return np.array([[self.func(x, b) for b in B] for x in X], dtype=float)

    def lipschitz(self, X):
        return self.lipschitz_hint


def evaluate_regression(rf: RegressionFunction, x, beta) -> float:
    """Return ``r(x, beta)`` for a single covariate and coefficient vector."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if x.ndim != 1:
        raise DimensionError(f"x must be a vector, got shape {x.shape}")
    if beta.ndim != 1:
        raise DimensionError(f"beta must be a vector, got shape {beta.shape}")
    try:
        expected = rf.n_coef(x.shape[0])
    except DimensionError as exc:
        raise DimensionError(f"x: {exc}") from None
    if beta.shape[0] != expected:
        raise DimensionError(f"beta has dimension {beta.shape[0]}, expected {expected}")
    return float(rf.mean_matrix(x[None, :], beta[None, :])[0, 0])


# ---------------------------------------------------------------------------
# Mixing measure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MixingMeasure:
    """Discrete probability measure ``sum_j weights[j] * delta(atoms[j])``.

    Weights whose sum is off by at most ``1e-8`` are renormalized; larger
    deviations raise. Pass ``domain`` to check that every atom lies in it.
    """

    atoms: np.ndarray
    weights: np.ndarray
    domain: Optional[Domain] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if atoms.ndim != 2 or w.ndim != 1 or atoms.shape[0] != w.shape[0]:
            raise DimensionError(
                f"atoms {atoms.shape} and weights {w.shape} do not describe the same support"
            )
        if w.shape[0] < 1:
            raise ValueError("a mixing measure needs at least one atom")
        if not (np.all(np.isfinite(atoms)) and np.all(np.isfinite(w))):
            raise ValueError("non-finite atom or weight")
        if np.any(w < 0):
            raise ValueError(f"negative weight {w.min()!r}")
        total = w.sum()
        if abs(total - 1.0) > WEIGHT_RENORM_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1")
        w = w / total
        if self.domain is not None:
            for j, a in enumerate(atoms):
                if not self.domain.contains(a):
                    raise ValueError(f"atom {j} = {a.tolist()} lies outside the domain")
        object.__setattr__(self, "atoms", _frozen(atoms))
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def point_mass(cls, beta) -> "MixingMeasure":
        return cls(np.atleast_2d(np.asarray(beta, dtype=float)), [1.0])

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def mean(self) -> np.ndarray:
        return self.weights @ self.atoms

    def merged(self, tol: float) -> "MixingMeasure":
        """Merge atoms closer than ``tol``; the heavier atom keeps its location."""
        order = np.argsort(-self.weights, kind="stable")
        kept_atoms, kept_w = [], []
        for j in order:
            a = self.atoms[j]
            for i, b in enumerate(kept_atoms):
                if np.linalg.norm(a - b) < tol:
                    kept_w[i] += self.weights[j]
                    break
            else:
                kept_atoms.append(a)
                kept_w.append(self.weights[j])
        return MixingMeasure(np.array(kept_atoms), np.array(kept_w))

    def sorted(self) -> "MixingMeasure":
        """Atoms in lexicographic order, for stable output."""
        order = np.lexsort(self.atoms.T[::-1])
        return MixingMeasure(self.atoms[order], self.weights[order])

    def to_dict(self) -> dict:
        return {"atoms": self.atoms.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MixingMeasure":
        return cls(np.array(d["atoms"], dtype=float), np.array(d["weights"], dtype=float))
