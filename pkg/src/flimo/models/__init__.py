"""Model zoo and a string-keyed registry used by the command line harness.

Each :class:`ModelEntry` adapts one model module to a common interface:
generate a dataset, build an inference :class:`~flimo.optimize.Problem`
from data, and draw deterministic starting points. Model options (sizes,
variants, ...) are passed as a plain dict merged over ``entry.defaults``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from ..optimize import Problem, uniform_start_sampler
from . import gandk, highdim, normal_toy, ricker, wright_fisher

__all__ = [
    "gandk",
    "highdim",
    "normal_toy",
    "ricker",
    "wright_fisher",
    "ModelEntry",
    "MODELS",
    "get_model",
]


@dataclass(frozen=True)
class ModelEntry:
    name: str
    defaults: dict
    param_names: Callable[[dict], tuple]
    true_theta: Callable[[dict], tuple]
    _generate: Callable
    _build: Callable
    default_n_sim: int
    default_starts: int
    _starts: Callable
    description: str = ""

    def options(self, overrides=None) -> dict:
        """Defaults updated by ``overrides``; values are coerced to the default's type."""
        opts = dict(self.defaults)
        for key, val in (overrides or {}).items():
            if key not in opts:
                raise KeyError(f"model {self.name!r} has no option {key!r}; known: {sorted(opts)}")
            opts[key] = _coerce(val, opts[key])
        return opts

    def generate(self, theta, seed: int, index: int, opts: dict) -> np.ndarray:
        theta = tuple(float(t) for t in theta)
        if len(theta) != len(self.param_names(opts)):
            raise ValueError(f"{self.name} expects {len(self.param_names(opts))} parameters")
        return np.asarray(self._generate(theta, seed, index, opts), dtype=float)

    def build_problem(self, y, n_sim: int, opts: dict, method=None) -> Problem:
        problem = self._build(np.asarray(y, dtype=float), int(n_sim), opts)
        if method is not None:
            problem.config = replace(problem.config, method=method)
            if problem.config.method == "brent" and problem.bounds.dim != 1:
                raise ValueError(f"Brent's method needs a one-parameter model, {self.name} has {problem.bounds.dim}")
        return problem

    def start_sampler(self, problem: Problem, y, seed: int, opts: dict):
        """Callable ``i -> x0`` giving deterministic starting points."""
        return self._starts(problem, np.asarray(y, dtype=float), int(seed), opts)


def _coerce(val, like):
    if isinstance(like, bool):
        return val if isinstance(val, bool) else str(val).lower() in ("1", "true", "yes")
    if isinstance(like, int):
        return int(float(val))
    if isinstance(like, float):
        return float(val)
    return str(val)


def _uniform_starts(problem, y, seed, opts):
    return uniform_start_sampler(problem.bounds, seed)


# g-and-k ---------------------------------------------------------------
def _gk_build(y, n_sim, opts):
    return gandk.build_problem(y, kind=opts["kind"], n_sim=n_sim)


# Wright-Fisher -----------------------------------------------------------
def _wf_config(opts):
    return wright_fisher.WrightFisherConfig(
        Ne=opts["Ne"],
        h=opts["h"],
        T=opts["T"],
        dt=opts["dt"],
        n_k=opts["n_k"] or int(round(0.3 * opts["Ne"])),
        X0=opts["X0"],
        variant=opts["variant"],
    )


def _wf_generate(theta, seed, index, opts):
    return wright_fisher.generate(_wf_config(opts), theta[0], seed, index)


def _wf_build(y, n_sim, opts):
    return wright_fisher.build_problem(y, _wf_config(opts), n_sim=n_sim)


# Ricker ------------------------------------------------------------------
def _rk_generate(theta, seed, index, opts):
    return ricker.generate(theta, opts["T"], seed, index)


def _rk_build(y, n_sim, opts):
    if len(y) != opts["T"] + 1:
        raise ValueError(f"expected a series of length T + 1 = {opts['T'] + 1}, got {len(y)}")
    return ricker.build_problem(y, n_sim=n_sim)


# high-dimensional toy ------------------------------------------------------
def _hd_config(opts):
    return highdim.HighDimToyConfig(p=opts["p"])


def _hd_generate(theta, seed, index, opts):
    # the observation is fixed by design; theta only fixes the dimension
    return _hd_config(opts).y_obs


def _hd_build(y, n_sim, opts):
    cfg = _hd_config(opts)
    if len(y) != cfg.p:
        raise ValueError(f"expected {cfg.p} observed coordinates, got {len(y)}")
    return highdim.build_problem(cfg, n_sim=n_sim, y_obs=y)


def _hd_starts(problem, y, seed, opts):
    cfg = _hd_config(opts)
    return lambda i: highdim.sample_start(cfg, [seed, i])


# normal toy --------------------------------------------------------------
def _nt_build(y, n_sim, opts):
    if n_sim != 1:
        raise ValueError("the normal toy uses a single simulation row (n_sim = 1)")
    return normal_toy.build_problem(y, m=opts["m"])


def _nt_starts(problem, y, seed, opts):
    sd = max(float(np.std(y)), 1e-3)

    def sample(i):
        if i == 0:
            return problem.x0
        rng = np.random.default_rng([seed, i])
        return problem.bounds.project([np.mean(y) + sd * rng.normal(), sd * np.exp(rng.normal(0.0, 0.5))])

    return sample


MODELS = {
    "gandk": ModelEntry(
        name="gandk",
        defaults={"n": 1000, "kind": "oflimo"},
        param_names=lambda o: gandk.PARAM_NAMES,
        true_theta=lambda o: gandk.THETA_TRUE,
        _generate=lambda th, seed, i, o: gandk.generate(th, o["n"], seed, i),
        _build=_gk_build,
        default_n_sim=1000,
        default_starts=1,
        _starts=_uniform_starts,
        description="g-and-k distribution; kind=oflimo (octiles) or wflimo (Wasserstein)",
    ),
    "wright-fisher": ModelEntry(
        name="wright-fisher",
        defaults={"Ne": 1000, "h": 0.5, "T": 45, "dt": 5, "n_k": 0, "X0": 0.2, "variant": "nicholson_gaussian"},
        param_names=lambda o: wright_fisher.PARAM_NAMES,
        true_theta=lambda o: (0.1,),
        _generate=_wf_generate,
        _build=_wf_build,
        default_n_sim=200,
        default_starts=1,
        _starts=_uniform_starts,
        description="Wright-Fisher selection; n_k=0 means 0.3 Ne",
    ),
    "ricker": ModelEntry(
        name="ricker",
        defaults={"T": 50},
        param_names=lambda o: ricker.PARAM_NAMES,
        true_theta=lambda o: ricker.THETA_TRUE,
        _generate=_rk_generate,
        _build=_rk_build,
        default_n_sim=100,
        default_starts=20,
        _starts=_uniform_starts,
        description="Ricker map with Poisson observations, parameters (log r, sigma, phi)",
    ),
    "highdim": ModelEntry(
        name="highdim",
        defaults={"p": 2},
        param_names=lambda o: _hd_config(o).names(),
        true_theta=lambda o: tuple(_hd_config(o).y_obs),
        _generate=_hd_generate,
        _build=_hd_build,
        default_n_sim=10,
        default_starts=1,
        _starts=_hd_starts,
        description="Gaussian toy in dimension p observed at (10, 0, ..., 0)",
    ),
    "normal-toy": ModelEntry(
        name="normal-toy",
        defaults={"n": 100, "m": 100},
        param_names=lambda o: normal_toy.PARAM_NAMES,
        true_theta=lambda o: normal_toy.THETA_TRUE,
        _generate=lambda th, seed, i, o: normal_toy.generate(th, o["n"], seed, i),
        _build=_nt_build,
        default_n_sim=1,
        default_starts=1,
        _starts=_nt_starts,
        description="Normal sample fitted on mean and variance; closed-form optimum",
    ),
}


def get_model(name: str) -> ModelEntry:
    try:
        return MODELS[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; known: {sorted(MODELS)}") from None
