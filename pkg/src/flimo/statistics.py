"""Summary statistics and distances used to build objectives.

Functions that appear on the simulation side of an objective accept
:class:`~flimo.dual.Dual` inputs; functions applied only to observed data
are plain numpy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dual as ad
from .randomness import gamma_quantile

__all__ = [
    "DegenerateSampleError",
    "SummaryVector",
    "wasserstein1",
    "empirical_octiles",
    "moment_estimates",
    "moment_estimates_from_octiles",
    "uniform_octiles_via_spacings",
    "empirical_octiles_via_spacings",
    "median",
    "median_abs_dev_objective",
    "ricker_design",
    "ricker_summaries",
    "ks_distance",
]


class DegenerateSampleError(ValueError):
    """A statistic is undefined for the given sample."""


@dataclass(frozen=True)
class SummaryVector:
    values: np.ndarray
    labels: tuple = field(default=())

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise DegenerateSampleError(f"non-finite summary statistics: {v}")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def as_dict(self):
        return dict(zip(self.labels, self.values.tolist()))


def wasserstein1(x, y):
    """Empirical 1-Wasserstein distance between equal-size samples.

    Mean absolute difference of the sorted samples. ``y`` may be a dual, or
    a batch of samples on the leading axis, in which case the distances
    are averaged over the batch.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("reference sample must be one-dimensional")
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"sample sizes differ: {x.shape[-1]} != {y.shape[-1]}")
    if len(x) == 0:
        raise ValueError("empty samples")
    return ad.average(ad.absolute(ad.take_sorted(y, axis=-1) - np.sort(x)))


def empirical_octiles(x) -> np.ndarray:
    """E_1..E_7 at probabilities i/8, linear interpolation of the empirical CDF.

    With ``n`` observations, E_i is the order statistic at position ``n*i/8``
    interpolated between neighbours, so x = 1..8 gives E_i = i exactly.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or len(x) < 8:
        raise ValueError("need a one-dimensional sample of at least 8 values")
    return np.quantile(x, np.arange(1, 8) / 8.0, method="interpolated_inverted_cdf")


def moment_estimates_from_octiles(E):
    """Octile Moment Estimates (S_A, S_B, S_g, S_k) from E_1..E_7 on the last axis.

    Returns a stacked array (or dual) with the four statistics on the last
    axis. Raises :class:`DegenerateSampleError` if E_6 == E_2 anywhere.
    """
    lead = (slice(None),) * (E.ndim - 1)
    e1, e2, e3, e4, e5, e6, e7 = (E[lead + (i,)] for i in range(7))
    spread = e6 - e2
    if np.any(ad.value(spread) == 0):
        raise DegenerateSampleError("E6 == E2: octile spread is zero")
    sa = e4
    sb = spread
    sg = (e6 + e2 - 2.0 * e4) / spread
    sk = (e7 - e5 + e3 - e1) / spread
    return ad.stack([sa, sb, sg, sk], axis=-1)


def moment_estimates(x) -> SummaryVector:
    """Octile Moment Estimates of an observed sample."""
    s = moment_estimates_from_octiles(empirical_octiles(x))
    return SummaryVector(s, ("S_A", "S_B", "S_g", "S_k"))


def uniform_octiles_via_spacings(quantiles, n: int = 1000) -> np.ndarray:
    """Uniform order statistics U_(n/8), ..., U_(7n/8) from 8 gamma spacings.

    ``quantiles`` has 8 entries on its last axis. Each becomes a Gamma(n/8)
    draw V_j and U_(i) = (V_1 + ... + V_i) / (V_1 + ... + V_8).
    """
    quantiles = np.asarray(quantiles, dtype=float)
    if quantiles.shape[-1] != 8:
        raise ValueError("spacing construction consumes exactly 8 quantiles")
    if n % 8:
        raise ValueError("sample size must be divisible by 8")
    v = gamma_quantile(quantiles, n / 8.0)
    c = np.cumsum(v, axis=-1)
    return c[..., :7] / c[..., 7:8]


def empirical_octiles_via_spacings(quantiles, n, quantile_fn):
    """Simulated octiles E_1..E_7 of a size-``n`` sample without drawing it.

    ``quantile_fn`` maps uniform levels to the target law (for instance a
    g-and-k quantile with fixed parameters, possibly duals).
    """
    return quantile_fn(uniform_octiles_via_spacings(quantiles, n))


def median(x, axis=0):
    """Median along ``axis``; even counts average the two central values."""
    if not ad.is_dual(x):
        return np.median(x, axis=axis)
    n = x.shape[axis]
    if n == 0:
        raise ValueError("median of an empty sample")
    s = ad.take_sorted(x, axis=axis)
    idx = [slice(None)] * x.ndim
    idx[axis] = n // 2
    hi = s[tuple(idx)]
    if n % 2:
        return hi
    idx[axis] = n // 2 - 1
    return 0.5 * (hi + s[tuple(idx)])


def median_abs_dev_objective(obs, sims):
    """Mean over time points of |obs_k - median_i sims[i, k]|."""
    obs = np.asarray(obs, dtype=float)
    if sims.shape[0] == 0:
        raise ValueError("no simulations")
    if sims.shape[1:] != obs.shape:
        raise ValueError(f"shape mismatch: sims {sims.shape} vs obs {obs.shape}")
    return ad.average(ad.absolute(obs - median(sims, axis=0)))


_RICKER_PINV: dict = {}


def ricker_design(T: int) -> np.ndarray:
    """Cubic design on the centred rank grid (2i - T - 1) / T, i = 1..T."""
    if T < 4:
        raise DegenerateSampleError("cubic regression needs at least 4 differences")
    u = (2.0 * np.arange(1, T + 1) - T - 1.0) / T
    return np.vander(u, 4, increasing=True)


def _ricker_pinv(T):
    if T not in _RICKER_PINV:
        X = ricker_design(T)
        if np.linalg.matrix_rank(X) < 4:
            raise DegenerateSampleError("singular regression design")
        _RICKER_PINV[T] = np.linalg.pinv(X)
    return _RICKER_PINV[T]


def ricker_summaries(y) -> np.ndarray:
    """Six Ricker statistics for each series on the last axis.

    Cubic least-squares coefficients of the sorted first differences, the
    mean count and the number of zero counts. ``y`` of shape (..., T+1)
    gives an output of shape (..., 6).
    """
    y = np.asarray(y, dtype=float)
    T = y.shape[-1] - 1
    P = _ricker_pinv(T)
    d = np.sort(np.diff(y, axis=-1), axis=-1)
    beta = d @ P.T
    mean = y.mean(axis=-1, keepdims=True)
    zeros = (y == 0).sum(axis=-1, keepdims=True).astype(float)
    return np.concatenate([beta, mean, zeros], axis=-1)


def ks_distance(x, y) -> float:
    """Kolmogorov-Smirnov D: sup distance between two empirical CDFs."""
    x = np.sort(np.asarray(x, dtype=float).ravel())
    y = np.sort(np.asarray(y, dtype=float).ravel())
    if len(x) == 0 or len(y) == 0:
        raise ValueError("empty sample")
    grid = np.concatenate([x, y])
    fx = np.searchsorted(x, grid, side="right") / len(x)
    fy = np.searchsorted(y, grid, side="right") / len(y)
    return float(np.max(np.abs(fx - fy)))
