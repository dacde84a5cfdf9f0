"""Ricker population dynamics observed through Poisson counts.

Latent state ``N_{t+1} = r N_t exp(-N_t + e_t)`` with ``e_t ~ N(0, sigma^2)``
and ``N_0 = 1``; observations ``Y_t ~ Poisson(phi N_t)`` for ``t = 0..T``.
Each simulation consumes ``T`` normal quantiles then ``T + 1`` Poisson
quantiles. Fitting is done over ``(log r, sigma, phi)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..objective import Bounds, ObjectiveSpec, SimulatorSpec
from ..optimize import OptimizerConfig, Problem
from ..randomness import make_data_quantiles, normal_quantile, poisson_quantile
from ..statistics import ricker_summaries
from .gandk import DegenerateObservation

log = logging.getLogger(__name__)

PARAM_NAMES = ("log_r", "sigma", "phi")
THETA_TRUE = (3.8, 0.3, 10.0)  # (log r, sigma, phi)
BOUNDS = Bounds([2.0, 0.0, 2.0], [5.5, 1.0, 30.0])
N_CAP = 1e12


@dataclass(frozen=True)
class RickerParams:
    r: float
    sigma: float
    phi: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("growth rate r must be positive")
        if not self.sigma >= 0:
            raise ValueError("noise scale sigma must be nonnegative")
        if not self.phi > 0:
            raise ValueError("observation scale phi must be positive")

    @classmethod
    def from_log(cls, theta):
        log_r, sigma, phi = theta
        return cls(float(np.exp(log_r)), float(sigma), float(phi))


def ricker_latent(params: RickerParams, normal_q, N0: float = 1.0) -> np.ndarray:
    """Latent trajectories ``N_0..N_T`` for each row of ``normal_q`` (n_sim, T)."""
    e = normal_quantile(np.atleast_2d(normal_q), 0.0, params.sigma)
    n_sim, T = e.shape
    N = np.empty((n_sim, T + 1))
    N[:, 0] = N0
    log_r = np.log(params.r)
    # an underflowed state (N = 0) stays at 0 through log(0) = -inf
    with np.errstate(over="ignore", divide="ignore"):
        for t in range(T):
            N[:, t + 1] = np.exp(log_r + np.log(N[:, t]) - N[:, t] + e[:, t])
    if np.any(N > N_CAP):
        log.debug("Ricker latent state capped at %g for r=%g", N_CAP, params.r)
        np.minimum(N, N_CAP, out=N)
    return N


def ricker_simulate(params: RickerParams, quantiles, T: int = 50) -> np.ndarray:
    """Observed series ``Y_0..Y_T`` for every quantile row (needs ``2T + 1`` columns)."""
    q = np.atleast_2d(np.asarray(quantiles, dtype=float))
    if q.shape[1] < 2 * T + 1:
        raise ValueError(f"need {2 * T + 1} quantiles per simulation")
    N = ricker_latent(params, q[:, :T])
    return poisson_quantile(q[:, T : 2 * T + 1], params.phi * N)


def relative_error(obs, sim) -> float:
    """sum_k ((sim_k - obs_k) / obs_k)^2."""
    obs = np.asarray(obs, dtype=float)
    if np.any(obs == 0):
        raise DegenerateObservation("observed Ricker statistic equal to zero")
    return float(np.sum(((sim - obs) / obs) ** 2))


def make_objective(T: int = 50) -> ObjectiveSpec:
    def simulate(theta, cursor):
        return ricker_simulate(RickerParams.from_log(theta), cursor.take(2 * T + 1), T)

    return ObjectiveSpec(
        simulator=SimulatorSpec(2 * T + 1, simulate, "discrete"),
        statistics=ricker_summaries,
        distance=relative_error,
        aggregation="mean",
    )


def observed_summary(y) -> np.ndarray:
    s = ricker_summaries(np.asarray(y, dtype=float))
    if np.any(s == 0):
        raise DegenerateObservation("observed Ricker statistic equal to zero")
    return s


def generate(theta=THETA_TRUE, T: int = 50, seed: int = 0, index: int = 0) -> np.ndarray:
    """One observed series of length ``T + 1``; ``theta`` is ``(log r, sigma, phi)``."""
    q = make_data_quantiles(seed, index, 2 * T + 1)
    return ricker_simulate(RickerParams.from_log(theta), q, T)[0]


def build_problem(y, n_sim: int = 100, config=None, x0=None, bounds=BOUNDS) -> Problem:
    y = np.asarray(y, dtype=float)
    T = len(y) - 1
    if config is None:
        config = OptimizerConfig(method="nelder_mead", ftol=1e-6, xtol=1e-4, max_evaluations=2000)
    if x0 is None:
        x0 = 0.5 * (bounds.lower + bounds.upper)
    return Problem(
        objective=make_objective(T),
        obs_summary=observed_summary(y),
        bounds=bounds,
        x0=np.asarray(x0, dtype=float),
        config=config,
        n_sim=n_sim,
        names=PARAM_NAMES,
    )
