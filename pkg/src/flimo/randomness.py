"""Fixed randomness and inverse-transform quantile kernels.

All simulation randomness is drawn once into a :class:`QuantileMatrix`
(one row per simulation, one column per random draw). Simulators then turn
each uniform into a draw of the required law through its quantile
function, which makes them deterministic functions of the parameters.

Kernels are vectorized over numpy arrays. The continuous ones accept
:class:`~flimo.dual.Dual` parameters and propagate derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import dual as ad
from .dual import Dual

EPS = 1e-12

__all__ = [
    "EPS",
    "ContractViolation",
    "QuantileMatrix",
    "QuantileCursor",
    "make_quantile_matrix",
    "make_data_quantiles",
    "normal_quantile",
    "binomial_quantile",
    "poisson_quantile",
    "gamma_quantile",
    "beta_quantile",
]


class ContractViolation(RuntimeError):
    """A simulator broke the quantile-consumption contract."""


def _uniform_row(seed: int, row: int, n_draw: int) -> np.ndarray:
    # Philox is counter based: keying on (seed, row) makes every entry
    # addressable independently of the matrix dimensions.
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, row], dtype=np.uint64)
    bits = np.random.Philox(key=key).random_raw(n_draw)
    u = (bits >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
    return np.clip(u, EPS, 1.0 - EPS)


@dataclass(frozen=True)
class QuantileMatrix:
    """Immutable ``n_sim x n_draw`` matrix of uniforms in ``[EPS, 1 - EPS]``."""

    entries: np.ndarray
    seed: int

    def __post_init__(self):
        self.entries.setflags(write=False)

    @property
    def n_sim(self) -> int:
        return self.entries.shape[0]

    @property
    def n_draw(self) -> int:
        return self.entries.shape[1]

    @property
    def shape(self):
        return self.entries.shape

    def row(self, i: int) -> "QuantileMatrix":
        """Single-simulation view, still a matrix with one row."""
        return QuantileMatrix(self.entries[i : i + 1], self.seed)

    def cursor(self) -> "QuantileCursor":
        return QuantileCursor(self.entries)


_DATA_ROW_OFFSET = 1 << 63


def make_data_quantiles(seed: int, dataset: int, n_draw: int) -> np.ndarray:
    """Uniforms for generating synthetic dataset number ``dataset``.

    Drawn from row indices at or above 2**63 so they never coincide with
    the rows of an inference matrix built from the same seed.
    """
    if seed < 0 or dataset < 0:
        raise ValueError("seed and dataset index must be non-negative")
    return _uniform_row(int(seed), _DATA_ROW_OFFSET + int(dataset), n_draw)


def make_quantile_matrix(seed: int, n_sim: int, n_draw: int) -> QuantileMatrix:
    """Draw the fixed randomness for ``n_sim`` simulations of ``n_draw`` draws.

    Entry ``(i, j)`` depends only on ``(seed, i, j)``.
    """
    if n_sim < 1 or n_draw < 1:
        raise ValueError(f"dimensions must be positive, got ({n_sim}, {n_draw})")
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    rows = [_uniform_row(int(seed), i, n_draw) for i in range(n_sim)]
    return QuantileMatrix(np.vstack(rows), int(seed))


@dataclass
class QuantileCursor:
    """Hands out unused columns of a block of quantile rows.

    All rows advance together: column ``j`` of every row belongs to the same
    draw of the respective simulation. Each column can be taken only once.
    """

    entries: np.ndarray
    position: int = field(default=0)

    @property
    def n_sim(self) -> int:
        return self.entries.shape[0]

    @property
    def remaining(self) -> int:
        return self.entries.shape[1] - self.position

    def take(self, k: int = 1) -> np.ndarray:
        """Next ``k`` columns, shape ``(n_sim, k)``."""
        if k > self.remaining:
            raise ContractViolation(
                f"simulation requested {k} quantiles but only {self.remaining} "
                f"of {self.entries.shape[1]} remain"
            )
        out = self.entries[:, self.position : self.position + k]
        self.position += k
        return out

    def take_one(self) -> np.ndarray:
        """Next column as a vector of length ``n_sim``."""
        return self.take(1)[:, 0]


def _check_prob(q):
    q = np.asarray(q, dtype=float)
    if np.any(~((q > 0.0) & (q < 1.0))):
        raise ValueError("quantile level must lie in the open interval (0, 1)")
    return q


# ----------------------------------------------------------------------
# continuous kernels
# ----------------------------------------------------------------------
def normal_quantile(q, mu=0.0, sigma=1.0):
    """Quantile of N(mu, sigma^2); ``mu`` and ``sigma`` may be duals."""
    q = _check_prob(q)
    if np.any(ad.value(sigma) < 0):
        raise ValueError("sigma must be non-negative")
    return mu + sigma * special.ndtri(q)


def _implicit_shape_derivative(x, cdf, pdf, params, index, h_rel=1e-4):
    """dQ/dparam = -(dF/dparam) / f(Q), dF/dparam by Richardson-extrapolated
    central differences (the incomplete gamma/beta functions have no shape
    derivative in scipy)."""
    p = np.asarray(ad.value(params[index]), dtype=float)
    h = h_rel * np.maximum(1.0, np.abs(p))

    def dF(step):
        up = list(map(ad.value, params))
        dn = list(map(ad.value, params))
        up[index] = p + step
        dn[index] = p - step
        return (cdf(x, *up) - cdf(x, *dn)) / (2.0 * step)

    d = (4.0 * dF(h / 2) - dF(h)) / 3.0
    return -d / pdf(x, *map(ad.value, params))


def _with_shape_derivatives(x, cdf, pdf, params):
    dual_params = [(i, p) for i, p in enumerate(params) if isinstance(p, Dual)]
    if not dual_params:
        return x
    ref = dual_params[0][1]
    if ref.hess is not None:
        raise NotImplementedError("second derivatives of shape parameters")
    grad = 0.0
    for i, p in dual_params:
        dq = _implicit_shape_derivative(x, cdf, pdf, params, i)
        grad = grad + dq[..., None] * p.grad
    shape = np.broadcast_shapes(np.shape(x), np.shape(grad)[:-1])
    return Dual(np.broadcast_to(x, shape), np.broadcast_to(grad, shape + (ref.nvars,)))


def _gamma_cdf(x, a):
    return special.gammainc(a, x)


def _gamma_pdf(x, a):
    return np.exp((a - 1.0) * np.log(x) - x - special.gammaln(a))


def gamma_quantile(q, shape):
    """Quantile of the unit-scale Gamma(shape) law.

    ``gammainc`` is inverted by scipy's ``gammaincinv`` then polished with
    safeguarded Newton steps on the CDF.
    """
    q = _check_prob(q)
    a = np.asarray(ad.value(shape), dtype=float)
    if np.any(a <= 0):
        raise ValueError("gamma shape must be positive")
    x = special.gammaincinv(a, q)
    for _ in range(2):
        f = _gamma_pdf(x, a)
        step = np.where(f > 0, (_gamma_cdf(x, a) - q) / np.where(f > 0, f, 1.0), 0.0)
        x_new = x - step
        x = np.where((x_new > 0) & np.isfinite(x_new), x_new, x)
    return _with_shape_derivatives(x, _gamma_cdf, _gamma_pdf, [shape])


def _beta_cdf(x, a, b):
    return special.betainc(a, b, x)


def _beta_pdf(x, a, b):
    return np.exp(
        (a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) - special.betaln(a, b)
    )


def beta_quantile(q, alpha, beta):
    """Quantile of Beta(alpha, beta) by numerical inversion of the CDF.

    A Newton step on the regularized incomplete beta function, guarded by a
    bisection bracket, polishes scipy's ``betaincinv`` to ~1e-12.
    """
    q = _check_prob(q)
    a = np.asarray(ad.value(alpha), dtype=float)
    b = np.asarray(ad.value(beta), dtype=float)
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("beta shape parameters must be positive")
    q, a, b = np.broadcast_arrays(q, a, b)
    x = special.betaincinv(a, b, q)
    lo = np.zeros_like(x)
    hi = np.ones_like(x)
    for _ in range(3):
        F = _beta_cdf(x, a, b)
        lo = np.where(F < q, x, lo)
        hi = np.where(F >= q, x, hi)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            f = _beta_pdf(x, a, b)
            x_new = x - (F - q) / f
        bad = ~np.isfinite(x_new) | (x_new < lo) | (x_new > hi)
        x = np.where(bad, 0.5 * (lo + hi), x_new)
        x = np.where((x <= 0) | (x >= 1), special.betaincinv(a, b, q), x)
    return _with_shape_derivatives(x, _beta_cdf, _beta_pdf, [alpha, beta])


# ----------------------------------------------------------------------
# discrete kernels: smallest k with CDF(k) >= q
# ----------------------------------------------------------------------
_TIE_RTOL = 1e-13


def _discrete_quantile(q, cdf, guess, lower, upper, max_steps=4):
    """Generic infimum search.

    Starts from an approximate quantile, walks a few unit steps, then
    bisects whatever is left. ``cdf(upper) >= q`` must hold (true for a
    finite support; callers with infinite support pass a verified bound).
    CDF values within a relative ``1e-13`` below ``q`` count as reaching
    it, so exact ties such as ``P(Bin(11, 1/2) <= 5) = 1/2`` survive the
    rounding of the special functions.
    """
    q = q * (1.0 - _TIE_RTOL)
    upper = np.broadcast_to(np.asarray(upper, dtype=float), np.shape(q))
    k = np.clip(np.floor(guess), lower, upper)
    lo = np.full(k.shape, lower - 1.0)  # cdf(lo) < q
    hi = upper.copy()  # cdf(hi) >= q
    for _ in range(max_steps):
        c = cdf(k)
        below = c < q
        lo = np.where(below, np.maximum(lo, k), lo)
        hi = np.where(below, hi, np.minimum(hi, k))
        if (hi - lo <= 1).all():
            return hi
        k = np.where(below, np.minimum(k + 1, hi), np.maximum(k - 1, lo + 1))
    while True:
        open_ = hi - lo > 1
        if not open_.any():
            return hi
        mid = np.floor(0.5 * (lo + hi))
        c = cdf(np.where(open_, mid, hi))
        hi = np.where(open_ & (c >= q), mid, hi)
        lo = np.where(open_ & (c < q), mid, lo)


def binomial_quantile(q, n, p):
    """Smallest ``k`` in ``0..n`` with ``P(Bin(n, p) <= k) >= q`` (as float)."""
    q = _check_prob(q)
    n = np.asarray(n, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)) or np.any(n < 0):
        raise ValueError("binomial requires n >= 0 and 0 <= p <= 1")
    q, n, p = np.broadcast_arrays(q, n, p)
    out = np.zeros(q.shape)
    live = (p > 0) & (n > 0)
    full = live & (p >= 1)
    out[full] = n[full]
    live &= ~full
    if live.any():
        qq, nn, pp = q[live], n[live], p[live]
        sd = np.sqrt(nn * pp * (1 - pp))
        z = special.ndtri(qq)
        guess = nn * pp + sd * z + (z * z - 1) * (1 - 2 * pp) / 6 - 0.5
        ni = nn.astype(np.int64)
        cdf = lambda k: special.bdtr(k, ni, pp)  # noqa: E731
        out[live] = _discrete_quantile(qq, cdf, guess, 0.0, nn)
    return out if out.ndim else float(out)


def poisson_quantile(q, lam):
    """Smallest ``k >= 0`` with ``P(Poisson(lam) <= k) >= q`` (as float)."""
    q = _check_prob(q)
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0) or np.any(np.isnan(lam)):
        raise ValueError("Poisson mean must be non-negative")
    q, lam = np.broadcast_arrays(q, lam)
    out = np.zeros(q.shape)
    live = lam > 0
    if live.any():
        qq, ll = q[live], lam[live]
        z = special.ndtri(qq)
        sd = np.sqrt(ll)
        guess = ll + sd * z + (z * z - 1) / 6 - 0.5
        cdf = lambda k: special.pdtr(k, ll)  # noqa: E731
        upper = np.ceil(ll + 20.0 * sd + 40.0)
        while True:
            short = cdf(upper) < qq
            if not short.any():
                break
            upper = np.where(short, 2.0 * upper, upper)
        out[live] = _discrete_quantile(qq, cdf, guess, 0.0, upper)
    return out if out.ndim else float(out)
