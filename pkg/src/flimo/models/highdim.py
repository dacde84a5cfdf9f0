"""High-dimensional Gaussian toy problem.

``y ~ N_p(theta, I)`` observed once at ``y_obs = (10, 0, ..., 0)``. The
objective is the Euclidean distance between ``y_obs`` and the mean of
``n_sim`` simulations. Starting points come from a banana-shaped prior:
``theta ~ N(0, diag(100, 1, ..., 1))`` followed by
``theta_2 <- theta_2 + b theta_1^2 - 100 b``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import dual as ad
from ..objective import Bounds, ObjectiveSpec, SimulatorSpec, evaluate
from ..optimize import OptimizerConfig, Problem
from ..randomness import normal_quantile


@dataclass(frozen=True)
class HighDimToyConfig:
    p: int = 2
    sigma0: float = 1.0
    b: float = 0.1

    def __post_init__(self):
        if self.p < 2:
            raise ValueError("dimension p must be at least 2")

    @property
    def y_obs(self) -> np.ndarray:
        y = np.zeros(self.p)
        y[0] = 10.0
        return y

    @property
    def bounds(self) -> Bounds:
        return Bounds.box(-200.0, 200.0, self.p)

    def names(self):
        return tuple(f"theta{i + 1}" for i in range(self.p))


def euclidean(obs, sim):
    d = sim - obs
    return ad.sqrt(ad.total(d * d))


def make_objective(config: HighDimToyConfig) -> ObjectiveSpec:
    p = config.p

    def simulate(theta, cursor):
        z = cursor.take(p)
        return ad.stack([normal_quantile(z[:, i], theta[i], config.sigma0) for i in range(p)], -1)

    return ObjectiveSpec(
        simulator=SimulatorSpec(p, simulate, "continuous"),
        statistics=lambda y: y,
        distance=euclidean,
        aggregation="mean",
    )


def highdim_objective(config: HighDimToyConfig, theta, R) -> float:
    """``J(theta)`` for the toy with a fixed quantile matrix."""
    return evaluate(make_objective(config), theta, R, config.y_obs)


def error_criterion(config: HighDimToyConfig, theta_hat) -> float:
    """Squared error on the first two coordinates."""
    t = np.asarray(theta_hat, dtype=float)
    y = config.y_obs
    return float((y[0] - t[0]) ** 2 + (y[1] - t[1]) ** 2)


def sample_start(config: HighDimToyConfig, seed: int) -> np.ndarray:
    """Starting point drawn from the banana-shaped prior."""
    rng = np.random.default_rng(seed)
    sd = np.ones(config.p)
    sd[0] = 10.0
    theta = rng.normal(0.0, sd)
    theta[1] += config.b * theta[0] ** 2 - 100.0 * config.b
    return config.bounds.project(theta)


def build_problem(config: HighDimToyConfig, n_sim: int = 10, opt=None, x0=None, y_obs=None) -> Problem:
    y_obs = config.y_obs if y_obs is None else np.asarray(y_obs, dtype=float)
    if y_obs.shape != (config.p,):
        raise ValueError(f"observation must have {config.p} coordinates")
    if opt is None:
        opt = OptimizerConfig(method="newton_box")
    return Problem(
        objective=make_objective(config),
        obs_summary=y_obs,
        bounds=config.bounds,
        x0=np.zeros(config.p) if x0 is None else np.asarray(x0, dtype=float),
        config=opt,
        n_sim=n_sim,
        names=config.names(),
    )
