"""Seeded simulation scenarios with their ground truth.

Scenarios:

``three_lines``
    y = one of 3 - x, 1 + 1.5x, -1 + 0.5x (probabilities .3/.3/.4) plus
    N(0, 0.5^2) noise, x ~ Unif[-1, 3].
``concentric_circles``
    coefficients uniform on the circles of radius 1 and 2 (equal mass),
    sigma = 0.5, x ~ Unif[-1, 3].
``three_lines_hetero``
    the three lines with component noise levels 0.3, 0.5, 0.7.
``trigonometric``
    y = b1 + sin(b2 x) + N(0, 0.5^2) with (b1, b2) = (-0.5, 1) or
    (-1.5, 1.5) equally likely.

Linear scenarios put an intercept column in the covariates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import Dataset, Design, Linear, MixingMeasure, RegressionFunction, Trigonometric

THREE_LINES = np.array([[3.0, -1.0], [1.0, 1.5], [-1.0, 0.5]])
THREE_LINES_PROBS = np.array([0.3, 0.3, 0.4])
HETERO_SIGMAS = np.array([0.3, 0.5, 0.7])
TRIG_ATOMS = np.array([[-0.5, 1.0], [-1.5, 1.5]])
CIRCLE_RADII = (1.0, 2.0)
CIRCLE_GRID = 4096

SCENARIOS = ("three_lines", "concentric_circles", "three_lines_hetero", "trigonometric")


@dataclass(frozen=True)
class Scenario:
    kind: str
    n: int = 500
    seed: int = 0
    sigma: Optional[float] = None
    x_low: float = -1.0
    x_high: float = 3.0

    def __post_init__(self):
        if self.kind not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.kind!r}; choose from {SCENARIOS}")
        if self.n < 1:
            raise ValueError("n must be at least 1")


@dataclass(frozen=True)
class Truth:
    """Ground truth behind a simulated dataset.

    ``measure`` is the mixing measure (for the circles, a deterministic
    discretization). ``sigma`` is a scalar or, for the heteroscedastic
    scenario, one value per atom of ``measure``. ``labels`` gives each row's
    generating component (for the circles, its radius index) and
    ``coefs`` the coefficient vector that generated each row.
    """

    scenario: Scenario
    rf: RegressionFunction
    measure: MixingMeasure
    sigma: object
    labels: np.ndarray
    coefs: np.ndarray
    x_range: tuple = field(default=(-1.0, 3.0))

    @property
    def intercept(self) -> bool:
        return isinstance(self.rf, Linear)

    def sample_covariates(self, rng: np.random.Generator, m: int) -> np.ndarray:
        x = rng.uniform(self.x_range[0], self.x_range[1], size=m)
        if self.intercept:
            return np.column_stack([np.ones(m), x])
        return x[:, None]

    def to_dict(self) -> dict:
        sig = self.sigma
        return {
            "format": "npmixreg-truth",
            "version": 1,
            "scenario": self.scenario.kind,
            "n": self.scenario.n,
            "seed": self.scenario.seed,
            "regression": self.rf.to_dict(),
            "intercept": self.intercept,
            "sigma": sig.tolist() if isinstance(sig, np.ndarray) else sig,
            "atoms": self.measure.atoms.tolist(),
            "weights": self.measure.weights.tolist(),
            "design": {"kind": "uniform", "low": self.x_range[0], "high": self.x_range[1]},
        }


def circle_measure(grid: int = CIRCLE_GRID) -> MixingMeasure:
    """Equal-mass discretization of the two-circle measure, ``grid`` atoms per circle set."""
    per = grid // 2
    theta = 2.0 * np.pi * (np.arange(per) + 0.5) / per
    pts = [r * np.column_stack([np.cos(theta), np.sin(theta)]) for r in CIRCLE_RADII]
    return MixingMeasure(np.vstack(pts), np.full(2 * per, 1.0 / (2 * per)))


def generate(scenario: Scenario):
    """Return ``(Dataset, Truth)`` for ``scenario``."""
    rng = np.random.default_rng(scenario.seed)
    n = scenario.n
    x = rng.uniform(scenario.x_low, scenario.x_high, size=n)
    z = rng.standard_normal(n)
    kind = scenario.kind
    xr = (scenario.x_low, scenario.x_high)

    if kind in ("three_lines", "three_lines_hetero"):
        labels = rng.choice(3, size=n, p=THREE_LINES_PROBS)
        coefs = THREE_LINES[labels]
        if kind == "three_lines":
            sigma = 0.5 if scenario.sigma is None else float(scenario.sigma)
            noise = sigma * z
        else:
            sigma = HETERO_SIGMAS.copy()
            noise = sigma[labels] * z
        y = coefs[:, 0] + coefs[:, 1] * x + noise
        measure = MixingMeasure(THREE_LINES, THREE_LINES_PROBS)
        data = Dataset.with_intercept(x, y, Design.RANDOM)
        return data, Truth(scenario, Linear(), measure, sigma, labels, coefs, xr)

    if kind == "concentric_circles":
        sigma = 0.5 if scenario.sigma is None else float(scenario.sigma)
        labels = rng.integers(0, 2, size=n)
        radius = np.asarray(CIRCLE_RADII)[labels]
        angle = rng.uniform(0.0, 2.0 * np.pi, size=n)
        coefs = radius[:, None] * np.column_stack([np.cos(angle), np.sin(angle)])
        y = coefs[:, 0] + coefs[:, 1] * x + sigma * z
        data = Dataset.with_intercept(x, y, Design.RANDOM)
        return data, Truth(scenario, Linear(), circle_measure(), sigma, labels, coefs, xr)

    # trigonometric
    sigma = 0.5 if scenario.sigma is None else float(scenario.sigma)
    labels = rng.integers(0, 2, size=n)
    coefs = TRIG_ATOMS[labels]
    y = coefs[:, 0] + np.sin(coefs[:, 1] * x) + sigma * z
    data = Dataset(x[:, None], y, Design.RANDOM)
    measure = MixingMeasure(TRIG_ATOMS, [0.5, 0.5])
    return data, Truth(scenario, Trigonometric(), measure, sigma, labels, coefs, xr)
