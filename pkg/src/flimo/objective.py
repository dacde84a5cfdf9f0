"""Deterministic objective functions over a fixed quantile matrix.

An :class:`ObjectiveSpec` glues a quantile-consuming simulator to summary
statistics and a distance. Once a :class:`~flimo.randomness.QuantileMatrix`
is fixed, ``J(theta)`` is an ordinary function that can be handed to a
deterministic optimizer.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import dual as ad
from .randomness import QuantileCursor, QuantileMatrix
from .statistics import DegenerateSampleError, SummaryVector, median

log = logging.getLogger(__name__)

__all__ = [
    "Bounds",
    "ParameterVector",
    "SimulatorSpec",
    "ObjectiveSpec",
    "Evaluation",
    "UnsupportedOperation",
    "evaluate",
    "evaluate_detailed",
    "evaluate_with_gradient",
    "evaluate_with_hessian",
    "FixedObjective",
]

AGGREGATIONS = ("mean", "median", "per_coordinate_median", "raw")


class UnsupportedOperation(TypeError):
    """Requested derivatives of an objective that is not differentiable."""


@dataclass(frozen=True)
class Bounds:
    """Per-coordinate closed box ``[lower, upper]``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape:
            raise ValueError("bounds must have matching shapes")
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unbounded(cls, n: int) -> "Bounds":
        return cls(np.full(n, -np.inf), np.full(n, np.inf))

    @classmethod
    def box(cls, lo: float, hi: float, n: int) -> "Bounds":
        return cls(np.full(n, float(lo)), np.full(n, float(hi)))

    @property
    def dim(self) -> int:
        return self.lower.size

    def project(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise ValueError("cannot sample uniformly from an unbounded box")
        return rng.uniform(self.lower, self.upper)


@dataclass(frozen=True)
class ParameterVector:
    values: np.ndarray
    bounds: Bounds
    names: tuple = ()

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.values, dtype=float))
        if v.shape != self.bounds.lower.shape:
            raise ValueError("parameter and bound dimensions differ")
        object.__setattr__(self, "values", self.bounds.project(v))


@dataclass(frozen=True)
class SimulatorSpec:
    """A deterministic simulator driven by quantiles.

    ``simulate(theta, cursor)`` receives the parameter sequence (floats or
    duals) and a :class:`~flimo.randomness.QuantileCursor` over a block of
    rows. It runs one simulation per row and returns an array (or dual)
    whose leading axis indexes simulations. It may take at most ``n_draw``
    columns, each once.
    """

    n_draw: int
    simulate: Callable
    output_kind: str = "continuous"

    def __post_init__(self):
        if self.output_kind not in ("continuous", "discrete", "mixed"):
            raise ValueError(f"unknown output kind {self.output_kind!r}")


@dataclass(frozen=True)
class ObjectiveSpec:
    """Simulator + statistics + distance (+ penalty) making up ``J``.

    ``statistics`` maps a batch of simulated datasets (leading axis =
    simulation) to a batch of summary vectors. ``aggregation`` says how the
    ``n_sim`` simulations collapse into a single summary vector:

    ``mean`` / ``median``
        statistics of each simulation, then the mean / median over rows;
    ``per_coordinate_median``
        median over simulations of the raw output, then the statistics;
    ``raw``
        the statistics get the whole batch and return one vector.
    """

    simulator: SimulatorSpec
    statistics: Callable
    distance: Callable
    aggregation: str = "mean"
    penalty: Optional[Callable] = None

    def __post_init__(self):
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}")

    def summarize(self, sims):
        if self.aggregation == "mean":
            return ad.average(self.statistics(sims), axis=0)
        if self.aggregation == "median":
            return median(self.statistics(sims), axis=0)
        if self.aggregation == "per_coordinate_median":
            return self.statistics(median(sims, axis=0))
        return self.statistics(sims)


@dataclass(frozen=True)
class Evaluation:
    value: object  # float or Dual
    failed: bool = False
    message: str = ""


def _theta_list(theta):
    if isinstance(theta, ParameterVector):
        return list(theta.values)
    if isinstance(theta, (list, tuple)):
        return list(theta)
    return list(np.atleast_1d(np.asarray(theta, dtype=float)))


def _obs_values(obs_summary):
    if isinstance(obs_summary, SummaryVector):
        return obs_summary.values
    return np.asarray(obs_summary, dtype=float)


def evaluate_detailed(objective: ObjectiveSpec, theta, R: QuantileMatrix, obs_summary):
    """Evaluate ``J`` and report statistic failures instead of raising.

    Degenerate statistics give ``+inf`` with ``failed=True``. Quantile
    over-consumption is a programming error and propagates.
    """
    th = _theta_list(theta)
    entries = R.entries if isinstance(R, QuantileMatrix) else np.asarray(R)
    if entries.shape[1] < objective.simulator.n_draw:
        raise ValueError(
            f"quantile matrix has {entries.shape[1]} columns, simulator needs "
            f"{objective.simulator.n_draw}"
        )
    cursor = QuantileCursor(entries[:, : objective.simulator.n_draw])
    obs = _obs_values(obs_summary)
    try:
        with np.errstate(all="ignore"):
            sims = objective.simulator.simulate(th, cursor)
            s = objective.summarize(sims)
            J = objective.distance(obs, s)
            if objective.penalty is not None:
                J = J + objective.penalty(th)
    except DegenerateSampleError as exc:
        log.debug("objective evaluation failed at %s: %s", ad.value(th), exc)
        return Evaluation(np.inf, True, str(exc))
    v = ad.value(J)
    if not np.isfinite(v):
        return Evaluation(np.inf, True, "non-finite objective")
    return Evaluation(J)


def evaluate(objective: ObjectiveSpec, theta, R: QuantileMatrix, obs_summary) -> float:
    """``J(theta)`` for a fixed quantile matrix; ``+inf`` on statistic failure."""
    return float(ad.value(evaluate_detailed(objective, theta, R, obs_summary).value))


def _derivatives(objective, theta, R, obs_summary, order):
    if objective.simulator.output_kind != "continuous":
        raise UnsupportedOperation(
            "derivatives need a continuous simulator; use a gradient-free "
            "optimizer or a continuous relaxation"
        )
    th = _theta_list(theta)
    x = np.array([float(ad.value(t)) for t in th])
    ev = evaluate_detailed(objective, ad.variables(x, order=order), R, obs_summary)
    n = x.size
    J = ev.value
    if ev.failed or not ad.is_dual(J):
        g = np.full(n, np.nan) if ev.failed else np.zeros(n)
        H = np.full((n, n), np.nan) if ev.failed else np.zeros((n, n))
        return float(ad.value(J)), g, H
    H = J.hess if J.hess is not None else None
    return float(J.val), np.array(J.grad, dtype=float), H


def evaluate_with_gradient(objective: ObjectiveSpec, theta, R, obs_summary):
    """``(J, dJ/dtheta)`` by forward-mode propagation."""
    J, g, _ = _derivatives(objective, theta, R, obs_summary, 1)
    return J, g


def evaluate_with_hessian(objective: ObjectiveSpec, theta, R, obs_summary):
    """``(J, gradient, Hessian)`` by second-order forward propagation."""
    return _derivatives(objective, theta, R, obs_summary, 2)


@dataclass
class FixedObjective:
    """``J`` with its quantile matrix and observed summaries bound in.

    Callable on a parameter vector; also exposes ``value_and_grad`` and
    ``value_grad_hess`` in the form the optimizers expect.
    """

    spec: ObjectiveSpec
    R: QuantileMatrix
    obs_summary: object
    n_evaluations: int = field(default=0)
    n_failures: int = field(default=0)

    def __call__(self, x) -> float:
        self.n_evaluations += 1
        ev = evaluate_detailed(self.spec, x, self.R, self.obs_summary)
        self.n_failures += ev.failed
        return float(ad.value(ev.value))

    def value_and_grad(self, x):
        self.n_evaluations += 1
        return evaluate_with_gradient(self.spec, x, self.R, self.obs_summary)

    def value_grad_hess(self, x):
        self.n_evaluations += 1
        return evaluate_with_hessian(self.spec, x, self.R, self.obs_summary)
