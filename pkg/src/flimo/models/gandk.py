"""g-and-k distributions.

The law is defined through its quantile function, so simulation by inverse
transform is exact. Two objectives are provided: relative squared error on
octile Moment Estimates (simulated octiles come from exponential spacings,
8 quantiles per simulation) and the 1-Wasserstein distance on full samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .. import dual as ad
from ..objective import Bounds, ObjectiveSpec, SimulatorSpec
from ..optimize import OptimizerConfig, Problem
from ..randomness import make_data_quantiles
from ..statistics import (
    DegenerateSampleError,
    moment_estimates,
    moment_estimates_from_octiles,
    uniform_octiles_via_spacings,
    wasserstein1,
)

PARAM_NAMES = ("A", "B", "g", "k")
THETA_TRUE = (3.0, 1.0, 2.0, 0.5)
BOUNDS = Bounds.box(0.0, 10.0, 4)


class DegenerateObservation(ValueError):
    """Observed summaries make the objective undefined."""


@dataclass(frozen=True)
class GandKParams:
    A: float
    B: float
    g: float
    k: float

    def __post_init__(self):
        if not self.B > 0:
            raise ValueError("g-and-k requires B > 0")
        if not self.k > -0.5:
            raise ValueError("g-and-k requires k > -1/2")

    def as_tuple(self):
        return (self.A, self.B, self.g, self.k)


def _gk(z, A, B, g, k):
    # (1 - exp(-g z)) / (1 + exp(-g z)) == tanh(g z / 2)
    skew = 1.0 + 0.8 * ad.tanh(0.5 * g * z)
    tail = ad.exp(k * np.log1p(z * z))
    return A + B * skew * tail * z


def gandk_quantile(q, A, B=None, g=None, k=None):
    """g-and-k quantile at level ``q``.

    Parameters may be given as ``(A, B, g, k)`` or as a single
    :class:`GandKParams`; any of them may be a dual.
    """
    if isinstance(A, GandKParams):
        A, B, g, k = A.as_tuple()
    q = np.asarray(q, dtype=float)
    if np.any(~((q > 0) & (q < 1))):
        raise ValueError("quantile level must lie in (0, 1)")
    if np.any(ad.value(B) <= 0) or np.any(ad.value(k) <= -0.5):
        raise ValueError("g-and-k requires B > 0 and k > -1/2")
    return _gk(special.ndtri(q), A, B, g, k)


def gandk_simulate(theta, quantiles, n: int = 1000, mode: str = "full"):
    """Simulate from quantile rows.

    ``mode="full"`` maps each of ``n`` quantiles to a draw; ``mode="octiles"``
    consumes 8 quantiles per row and returns the 7 simulated octiles of a
    size-``n`` sample. Works on a single row or a batch of rows.
    """
    A, B, g, k = theta
    quantiles = np.asarray(quantiles, dtype=float)
    if mode == "full":
        if quantiles.shape[-1] < n:
            raise ValueError(f"need {n} quantiles per simulation")
        return _gk(special.ndtri(quantiles[..., :n]), A, B, g, k)
    if mode == "octiles":
        if quantiles.shape[-1] < 8:
            raise ValueError("octile mode needs 8 quantiles per simulation")
        u = uniform_octiles_via_spacings(quantiles[..., :8], n)
        return _gk(special.ndtri(u), A, B, g, k)
    raise ValueError(f"unknown mode {mode!r}")


def relative_squared_error(obs, sim):
    """sum_i ((obs_i - sim_i) / obs_i)^2."""
    obs = np.asarray(obs, dtype=float)
    if np.any(obs == 0):
        raise DegenerateObservation("observed statistic equal to zero")
    return ad.total(((obs - sim) / obs) ** 2)


def octile_objective(n: int = 1000) -> ObjectiveSpec:
    """Relative squared error between octile Moment Estimates (mean over simulations)."""

    def simulate(theta, cursor):
        return gandk_simulate(theta, cursor.take(8), n, mode="octiles")

    return ObjectiveSpec(
        simulator=SimulatorSpec(n_draw=8, simulate=simulate, output_kind="continuous"),
        statistics=moment_estimates_from_octiles,
        distance=relative_squared_error,
        aggregation="mean",
    )


def wasserstein_objective(n: int = 1000) -> ObjectiveSpec:
    """1-Wasserstein distance between the observed and simulated samples."""

    def simulate(theta, cursor):
        return gandk_simulate(theta, cursor.take(n), n, mode="full")

    return ObjectiveSpec(
        simulator=SimulatorSpec(n_draw=n, simulate=simulate, output_kind="continuous"),
        statistics=lambda sims: sims,
        distance=wasserstein1,
        aggregation="raw",
    )


def gandk_objectives(n: int = 1000) -> dict:
    return {"oflimo": octile_objective(n), "wflimo": wasserstein_objective(n)}


def observed_summary(y, kind: str = "oflimo"):
    """Summary of the observations matching an objective kind."""
    y = np.asarray(y, dtype=float)
    if kind == "oflimo":
        s = moment_estimates(y)
        if np.any(s.values == 0):
            raise DegenerateObservation("observed Moment Estimate equal to zero")
        return s.values
    if kind == "wflimo":
        return np.sort(y)
    raise ValueError(f"unknown objective kind {kind!r}")


def initial_guess(y) -> np.ndarray:
    """Rough start from the observed octiles (location, scale, skew, tails)."""
    S_A, S_B, S_g, S_k = moment_estimates(y).values
    A0 = S_A
    B0 = S_B / (2.0 * special.ndtri(0.75))
    g0 = np.clip(4.0 * S_g, 0.1, 5.0)
    k0 = np.clip(S_k / 1.23 - 1.0 + 0.5, 0.05, 3.0)
    return BOUNDS.project([A0, B0, g0, k0])


def generate(theta=THETA_TRUE, n: int = 1000, seed: int = 0, index: int = 0) -> np.ndarray:
    """One synthetic dataset of ``n`` draws."""
    GandKParams(*theta)
    q = make_data_quantiles(seed, index, n)
    return gandk_simulate(theta, q, n, mode="full")


def build_problem(y, kind="oflimo", n_sim=1000, config=None, n=None, x0=None) -> Problem:
    n = len(y) if n is None else n
    if kind == "oflimo" and n % 8:
        raise ValueError("octile objective needs a sample size divisible by 8")
    spec = gandk_objectives(n)[kind]
    if config is None:
        # the Wasserstein objective is kinked wherever sorted values cross;
        # exact Hessians miss that curvature and BFGS copes far better
        config = OptimizerConfig(method="newton_box", hessian_max_dim=8 if kind == "oflimo" else 0)
    return Problem(
        objective=spec,
        obs_summary=observed_summary(y, kind),
        bounds=BOUNDS,
        x0=initial_guess(y) if x0 is None else np.asarray(x0, dtype=float),
        config=config,
        n_sim=n_sim,
        names=PARAM_NAMES,
    )
