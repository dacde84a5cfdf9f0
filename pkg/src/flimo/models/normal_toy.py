"""Normal toy problem with a closed-form optimum.

One simulation of ``m`` normal draws from a fixed quantile row is compared
with the observations through the squared differences of the means and of
the (1/m normalized) variances. The minimizer is available in closed form,
which makes the problem an exact oracle for the optimizers.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from .. import dual as ad
from ..objective import Bounds, ObjectiveSpec, SimulatorSpec
from ..optimize import OptimizerConfig, Problem
from ..randomness import make_data_quantiles, normal_quantile

PARAM_NAMES = ("mu", "sigma")
THETA_TRUE = (0.0, 1.0)
BOUNDS = Bounds([-1e3, 1e-9], [1e3, 1e3])


def moments(x):
    """Mean and biased variance along the last axis, stacked on the last axis."""
    m = ad.average(x, axis=-1)
    d = x - ad.stack([m] * x.shape[-1], axis=-1)
    return ad.stack([m, ad.average(d * d, axis=-1)], axis=-1)


def observed_summary(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or len(y) < 2:
        raise ValueError("need at least two observations")
    return np.array([y.mean(), y.var()])


def analytic_normal_oracle(y, Q):
    """Closed-form minimizer ``(mu_hat, sigma_hat)`` of the moment objective.

    With ``e = z(Q)`` the standard normal quantiles of the fixed row,
    ``sigma_hat = sigma_y / sqrt(mean(e^2) - mean(e)^2)`` and
    ``mu_hat = ybar - sigma_hat * mean(e)``.
    """
    ybar, var_y = observed_summary(y)
    Q = np.asarray(Q, dtype=float).ravel()
    if len(Q) < 2:
        raise ValueError("quantile row must have at least two entries")
    e = special.ndtri(Q)
    v = np.mean(e * e) - np.mean(e) ** 2
    if not v > 0:
        raise ValueError("degenerate quantile row: zero variance of normal scores")
    sigma_hat = np.sqrt(var_y / v)
    return float(ybar - sigma_hat * np.mean(e)), float(sigma_hat)


def make_objective(m: int) -> ObjectiveSpec:
    def simulate(theta, cursor):
        return normal_quantile(cursor.take(m), theta[0], theta[1])

    def distance(obs, sim):
        d = sim - obs
        return ad.total(d * d)

    return ObjectiveSpec(
        simulator=SimulatorSpec(m, simulate, "continuous"),
        statistics=moments,
        distance=distance,
        aggregation="mean",
    )


def generate(theta=THETA_TRUE, n: int = 100, seed: int = 0, index: int = 0) -> np.ndarray:
    q = make_data_quantiles(seed, index, n)
    return normal_quantile(q, theta[0], theta[1])


def build_problem(y, m: int = 100, config=None, x0=(0.0, 1.0)) -> Problem:
    if config is None:
        config = OptimizerConfig(method="newton_box", gtol=1e-10)
    return Problem(
        objective=make_objective(m),
        obs_summary=observed_summary(y),
        bounds=BOUNDS,
        x0=np.asarray(x0, dtype=float),
        config=config,
        n_sim=1,
        names=PARAM_NAMES,
    )
