"""Wright-Fisher allele frequency trajectories with selection.

One generation maps the frequency ``x`` of allele A1 through the selection
map ``f`` and resamples ``Ne`` gene copies. At the sampling times
``0, dt, 2 dt, ..., T`` a sample of ``n_k`` alleles is counted. The only
inferred parameter is the selective value ``s``.

Three transition kernels are available:

``binomial``
    the exact model (piecewise-constant objective, gradient-free fitting);
``nicholson_gaussian``
    normal transition with the binomial mean and variance, absorbing at 0 and 1;
``beta_spikes``
    atoms at loss / fixation plus a moment-matched Beta otherwise.

Both approximate kernels sample with a normal approximation of the binomial.
Quantile budget per simulation: ``T`` transition draws then one draw per
sampling time.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .. import dual as ad
from ..objective import Bounds, ObjectiveSpec, SimulatorSpec
from ..optimize import OptimizerConfig, Problem
from ..randomness import (
    beta_quantile,
    binomial_quantile,
    make_data_quantiles,
    normal_quantile,
)
from ..statistics import median_abs_dev_objective

VARIANTS = ("binomial", "nicholson_gaussian", "beta_spikes")
PARAM_NAMES = ("s",)
BOUNDS = Bounds([-0.5], [2.0])
PENALTY = 1e-2


@dataclass(frozen=True)
class WrightFisherConfig:
    Ne: int = 1000
    h: float = 0.5
    T: int = 45
    dt: int = 5
    n_k: int = 300
    X0: float = 0.2  # true initial frequency, used for data generation only
    variant: str = "nicholson_gaussian"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if not 0 <= self.h <= 1:
            raise ValueError("dominance h must lie in [0, 1]")
        if self.T % self.dt:
            raise ValueError("T must be a multiple of the sampling interval")
        if not 0 < self.n_k <= self.Ne:
            raise ValueError("need 0 < n_k <= Ne")
        if not 0 <= self.X0 <= 1:
            raise ValueError("initial frequency must lie in [0, 1]")

    @classmethod
    def scenario(cls, Ne, **kw):
        """Default sampling scheme: every 5 generations up to 45, 30% of Ne."""
        return cls(Ne=int(Ne), n_k=int(round(0.3 * Ne)), **kw)

    @property
    def times(self) -> np.ndarray:
        return np.arange(0, self.T + 1, self.dt)

    @property
    def n_times(self) -> int:
        return self.T // self.dt + 1

    @property
    def n_draw(self) -> int:
        return self.T + self.n_times


def wf_selection_map(x, s, h):
    """Expected frequency after selection, f(x) = x(1+sh+s(1-h)x) / (1+2shx+s(1-2h)x^2).

    Evaluated as ``x + s x (1-x) (h + (1-2h) x) / den`` so that 0 and 1 are
    fixed points in floating point as well.
    """
    den = 1.0 + 2.0 * s * h * x + s * (1.0 - 2.0 * h) * x * x
    return x + s * x * (1.0 - x) * (h + (1.0 - 2.0 * h) * x) / den


def _normal_step(q, n, p):
    """Normal approximation of Bin(n, p) / n clamped to [0, 1]; absorbing at 0, 1."""
    sd = ad.sqrt(ad.clip(p * (1.0 - p), 0.0, 0.25) / n)
    return ad.clip(normal_quantile(q, p, sd), 0.0, 1.0)


def _beta_spikes_step(q, N, p):
    """Beta-with-spikes transition (constant-in-``p`` derivatives are not propagated)."""
    p = np.clip(np.asarray(ad.value(p), dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        p_loss = (1.0 - p) ** N
        p_fix = p**N
        stay = 1.0 - p_loss - p_fix
        # moments of K/N given 0 < K < N
        m = (p - p_fix) / stay
        ex2 = (p * (1.0 - p) / N + p * p - p_fix) / stay
        var = ex2 - m * m
        nu = m * (1.0 - m) / var - 1.0
        a = m * nu
        b = (1.0 - m) * nu
    out = np.where(q < p_loss, 0.0, 1.0)
    mid = (q >= p_loss) & (q <= 1.0 - p_fix) & (stay > 1e-300)
    ok = mid & (a > 0) & (b > 0) & np.isfinite(a) & np.isfinite(b)
    if ok.any():
        u = np.clip((q[ok] - p_loss[ok]) / stay[ok], 1e-12, 1 - 1e-12)
        out = out.copy()
        out[ok] = beta_quantile(u, a[ok], b[ok])
    # near-degenerate cases fall back to the conditional mean
    rest = mid & ~ok
    out = np.where(rest, np.nan_to_num(m, nan=p), out)
    return out


def wf_simulate(config: WrightFisherConfig, s, quantiles, x0):
    """Counts ``Y_k`` at each sampling time for every quantile row.

    ``quantiles`` has shape ``(n_sim, n_draw)`` (or a single row). ``x0`` is
    the starting frequency (the estimate ``Y_0 / n_0`` during inference).
    Returns an array (or dual) of shape ``(n_sim, n_times)``.
    """
    q = np.atleast_2d(np.asarray(quantiles, dtype=float))
    if q.shape[1] < config.n_draw:
        raise ValueError(f"need {config.n_draw} quantiles per simulation")
    trans, samp = q[:, : config.T], q[:, config.T : config.n_draw]
    n_sim = q.shape[0]
    N, n_k = config.Ne, config.n_k
    x = np.full(n_sim, float(x0))
    counts = []
    j = 0
    for t in range(config.T + 1):
        if t % config.dt == 0:
            counts.append(_sample(config.variant, samp[:, j], n_k, x))
            j += 1
        if t == config.T:
            break
        p = wf_selection_map(x, s, config.h)
        if config.variant == "binomial":
            x = binomial_quantile(trans[:, t], N, np.clip(p, 0.0, 1.0)) / N
        elif config.variant == "nicholson_gaussian":
            x = _normal_step(trans[:, t], N, p)
        else:
            x = _beta_spikes_step(trans[:, t], N, p)
    return ad.stack(counts, axis=-1)


def _sample(variant, q, n_k, x):
    if variant == "binomial":
        return binomial_quantile(q, n_k, np.clip(ad.value(x), 0.0, 1.0))
    return n_k * _normal_step(q, n_k, x)


def wf_objective(obs, sims, s):
    """Mean absolute deviation of the observations around the simulated medians,
    plus ``0.01 |s|``."""
    return median_abs_dev_objective(obs, sims) + PENALTY * ad.absolute(s)


def make_objective(config: WrightFisherConfig, x0_hat: float) -> ObjectiveSpec:
    kind = "discrete" if config.variant == "binomial" else "continuous"

    def simulate(theta, cursor):
        return wf_simulate(config, theta[0], cursor.take(config.n_draw), x0_hat)

    return ObjectiveSpec(
        simulator=SimulatorSpec(config.n_draw, simulate, kind),
        statistics=lambda med: med,
        distance=lambda obs, med: ad.average(ad.absolute(obs - med)),
        aggregation="per_coordinate_median",
        penalty=lambda theta: PENALTY * ad.absolute(theta[0]),
    )


def generate(config: WrightFisherConfig, s: float, seed: int = 0, index: int = 0):
    """Observed counts from the exact binomial model started at ``config.X0``."""
    exact = replace(config, variant="binomial")
    q = make_data_quantiles(seed, index, exact.n_draw)
    return wf_simulate(exact, s, q, exact.X0)[0]


def build_problem(counts, config: WrightFisherConfig, n_sim=200, opt=None, bounds=BOUNDS):
    counts = np.asarray(counts, dtype=float)
    if counts.shape != (config.n_times,):
        raise ValueError(f"expected {config.n_times} counts, got {counts.shape}")
    x0_hat = counts[0] / config.n_k
    if opt is None:
        opt = OptimizerConfig(method="brent", xtol=1e-6, scan_points=31)
    return Problem(
        objective=make_objective(config, x0_hat),
        obs_summary=counts,
        bounds=bounds,
        x0=np.array([0.0]),
        config=opt,
        n_sim=n_sim,
        names=PARAM_NAMES,
    )
