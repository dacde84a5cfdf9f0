"""Deterministic optimizers for fixed-landscape objectives.

Three local methods, all bound-respecting and tolerant of ``+inf`` values:

* :func:`brent_minimize` - golden section with parabolic steps on an interval;
* :func:`nelder_mead` - simplex search with vertices projected on the box;
* :func:`newton_box` - projected Newton with exact (forward-over-forward)
  Hessians in low dimension and BFGS updates above.

Drivers on top: :func:`multi_start`, :func:`empirical_distribution` and
:func:`outlier_filter`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .objective import Bounds, FixedObjective, ObjectiveSpec, ParameterVector
from .randomness import QuantileMatrix, make_quantile_matrix

__all__ = [
    "OptimizerConfig",
    "InferenceResult",
    "OptimizationFailure",
    "brent_minimize",
    "scan_brent",
    "nelder_mead",
    "newton_box",
    "uniform_start_sampler",
    "multi_start",
    "Problem",
    "empirical_distribution",
    "outlier_filter",
]

METHODS = ("brent", "nelder_mead", "newton_box")


class OptimizationFailure(RuntimeError):
    """Every attempted optimization failed."""

    def __init__(self, message, results=()):
        super().__init__(message)
        self.results = list(results)


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "newton_box"
    ftol: float = 1e-10
    xtol: float = 1e-8
    gtol: float = 1e-8
    max_iterations: int = 1000
    max_evaluations: int = 10_000
    hessian_max_dim: int = 8
    initial_step: float = 0.05  # Nelder-Mead simplex size, fraction of box width
    scan_points: int = 0  # brent only: coarse grid before the local search

    def __post_init__(self):
        method = self.method.replace("-", "_")
        if method == "newton":
            method = "newton_box"
        if method not in METHODS:
            raise ValueError(f"unknown optimizer {self.method!r}")
        object.__setattr__(self, "method", method)
        if min(self.ftol, self.xtol, self.gtol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iterations < 1 or self.max_evaluations < 1:
            raise ValueError("iteration and evaluation budgets must be positive")


@dataclass
class InferenceResult:
    theta_hat: np.ndarray
    objective_value: float
    iterations: int
    evaluations: int
    converged: bool
    restart_index: int = 0
    gradient_norm: Optional[float] = None
    message: str = ""
    start: Optional[np.ndarray] = None
    trace: list = field(default_factory=list, repr=False)

    @property
    def failed(self) -> bool:
        return not np.isfinite(self.objective_value)

    def to_dict(self, names: Sequence[str] = ()) -> dict:
        theta = [float(v) for v in np.atleast_1d(self.theta_hat)]
        names = list(names) or [f"theta_{i}" for i in range(len(theta))]
        return {
            "theta_hat": dict(zip(names, theta)),
            "objective": _json_float(self.objective_value),
            "iterations": int(self.iterations),
            "evaluations": int(self.evaluations),
            "converged": bool(self.converged),
            "restart_index": int(self.restart_index),
            "gradient_norm": None
            if self.gradient_norm is None
            else _json_float(self.gradient_norm),
            "message": self.message,
        }


def _json_float(v):
    v = float(v)
    return v if math.isfinite(v) else str(v)


class _Counter:
    """Counts calls and turns NaN or exceptions-free garbage into +inf."""

    def __init__(self, f, limit):
        self.f = f
        self.n = 0
        self.limit = limit

    def __call__(self, x):
        self.n += 1
        v = float(self.f(x))
        return v if not math.isnan(v) else math.inf

    @property
    def exhausted(self):
        return self.n >= self.limit


def _unpack_start(x0, bounds):
    if isinstance(x0, ParameterVector):
        return x0.values.copy(), x0.bounds
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    if bounds is None:
        bounds = Bounds.unbounded(x.size)
    return bounds.project(x), bounds


# ----------------------------------------------------------------------
# Brent
# ----------------------------------------------------------------------
_GOLD = 0.5 * (3.0 - math.sqrt(5.0))


def brent_minimize(f: Callable[[float], float], interval, config=None) -> InferenceResult:
    """Minimize a scalar function on ``[lo, hi]`` by Brent's method.

    Never evaluates outside the open interval. ``+inf`` values are allowed:
    parabolic interpolation is skipped whenever one of the three retained
    points is not finite. With ``config.scan_points > 0`` a coarse grid scan
    picks the bracket first (see :func:`scan_brent`), which is what makes
    piecewise-constant landscapes reliable: ties between plateaus carry no
    direction, so plain Brent can discard the lowest plateau.
    """
    config = config or OptimizerConfig(method="brent")
    a, b = map(float, interval)
    if not (a < b) or not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError(f"invalid interval [{a}, {b}]")
    if config.scan_points:
        return scan_brent(f, (a, b), replace(config, scan_points=0), config.scan_points)
    fc = _Counter(lambda x: f(float(x)), config.max_evaluations)
    rtol = 1e-12
    x = w = v = a + _GOLD * (b - a)
    fx = fw = fv = fc(x)
    d = e = 0.0
    trace = [fx]
    converged = False
    it = 0
    for it in range(1, config.max_iterations + 1):
        m = 0.5 * (a + b)
        tol1 = rtol * abs(x) + config.xtol / 3.0
        tol2 = 2.0 * tol1
        if abs(x - m) <= tol2 - 0.5 * (b - a):
            converged = True
            break
        if fc.exhausted:
            break
        golden = True
        if abs(e) > tol1 and math.isfinite(fx) and math.isfinite(fw) and math.isfinite(fv):
            r = (x - w) * (fx - fv)
            q = (x - v) * (fx - fw)
            p = (x - v) * q - (x - w) * r
            q = 2.0 * (q - r)
            if q > 0.0:
                p = -p
            else:
                q = -q
            etemp = e
            e = d
            if abs(p) < abs(0.5 * q * etemp) and p > q * (a - x) and p < q * (b - x):
                d = p / q
                u = x + d
                if (u - a) < tol2 or (b - u) < tol2:
                    d = tol1 if x < m else -tol1
                golden = False
        if golden:
            e = (b - x) if x < m else (a - x)
            d = _GOLD * e
        u = x + (d if abs(d) >= tol1 else math.copysign(tol1, d))
        fu = fc(u)
        if fu <= fx:
            if u < x:
                b = x
            else:
                a = x
            v, fv = w, fw
            w, fw = x, fx
            x, fx = u, fu
        else:
            if u < x:
                a = u
            else:
                b = u
            if fu <= fw or w == x:
                v, fv = w, fw
                w, fw = u, fu
            elif fu <= fv or v == x or v == w:
                v, fv = u, fu
        trace.append(fx)
    return InferenceResult(
        theta_hat=np.array([x]),
        objective_value=fx,
        iterations=it,
        evaluations=fc.n,
        converged=converged and math.isfinite(fx),
        message="" if converged else "evaluation or iteration budget exhausted",
        trace=trace,
    )


def scan_brent(f, interval, config=None, n_grid: int = 21) -> InferenceResult:
    """Coarse grid scan followed by Brent around the best grid cell.

    Useful on rough or piecewise-constant one-dimensional landscapes where
    a single bracket may sit in a poor basin.
    """
    config = config or OptimizerConfig(method="brent")
    lo, hi = map(float, interval)
    if not lo < hi:
        raise ValueError(f"invalid interval [{lo}, {hi}]")
    grid = np.linspace(lo, hi, max(n_grid, 3))
    vals = np.array([float(f(float(g))) for g in grid])
    vals[np.isnan(vals)] = np.inf
    i = int(np.argmin(vals))
    sub = (grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)])
    res = brent_minimize(f, sub, config)
    res.evaluations += len(grid)
    res.trace = [float(vals[i])] + [min(t, float(vals[i])) for t in res.trace]
    if vals[i] < res.objective_value:
        res.theta_hat = np.array([grid[i]])
        res.objective_value = float(vals[i])
    return res


# ----------------------------------------------------------------------
# Nelder-Mead
# ----------------------------------------------------------------------
def nelder_mead(f, x0, config=None, bounds=None) -> InferenceResult:
    """Nelder-Mead with coefficients (1, 2, 0.5, 0.5) and projected vertices.

    Stops when the spread of objective values over the simplex drops below
    ``ftol`` or its diameter below ``xtol``.
    """
    config = config or OptimizerConfig(method="nelder_mead")
    x0, bounds = _unpack_start(x0, bounds)
    fc = _Counter(f, config.max_evaluations)
    n = x0.size
    width = bounds.upper - bounds.lower
    step = np.where(
        np.isfinite(width), config.initial_step * width, config.initial_step * np.maximum(np.abs(x0), 1.0)
    )
    step = np.where(step > 0, step, config.initial_step)
    simplex = [x0.copy()]
    for i in range(n):
        y = x0.copy()
        y[i] = x0[i] + step[i] if x0[i] + step[i] <= bounds.upper[i] else x0[i] - step[i]
        simplex.append(bounds.project(y))
    simplex = np.array(simplex)
    fvals = np.array([fc(x) for x in simplex])
    if not np.any(np.isfinite(fvals)):
        raise OptimizationFailure("objective is not finite at any initial vertex")

    trace = []
    converged = False
    message = "iteration budget exhausted"
    it = 0
    for it in range(1, config.max_iterations + 1):
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        trace.append(float(fvals[0]))
        spread = fvals[-1] - fvals[0]
        diameter = np.max(np.abs(simplex[1:] - simplex[0]))
        if (np.isfinite(spread) and spread <= config.ftol) or diameter <= config.xtol:
            converged = True
            message = ""
            break
        if fc.exhausted:
            message = "evaluation budget exhausted"
            break
        centroid = simplex[:-1].mean(axis=0)
        worst, fworst = simplex[-1], fvals[-1]
        xr = bounds.project(centroid + (centroid - worst))
        fr = fc(xr)
        if fr < fvals[0]:
            xe = bounds.project(centroid + 2.0 * (xr - centroid))
            fe = fc(xe)
            simplex[-1], fvals[-1] = (xe, fe) if fe < fr else (xr, fr)
            continue
        if fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fworst:
            xc = bounds.project(centroid + 0.5 * (xr - centroid))
            fcv = fc(xc)
            if fcv <= fr:
                simplex[-1], fvals[-1] = xc, fcv
                continue
        else:
            xc = bounds.project(centroid + 0.5 * (worst - centroid))
            fcv = fc(xc)
            if fcv < fworst:
                simplex[-1], fvals[-1] = xc, fcv
                continue
        best = simplex[0]
        for j in range(1, n + 1):
            simplex[j] = bounds.project(best + 0.5 * (simplex[j] - best))
            fvals[j] = fc(simplex[j])
    order = np.argsort(fvals, kind="stable")
    return InferenceResult(
        theta_hat=simplex[order[0]].copy(),
        objective_value=float(fvals[order[0]]),
        iterations=it,
        evaluations=fc.n,
        converged=converged and bool(np.isfinite(fvals[order[0]])),
        message=message,
        start=x0,
        trace=trace,
    )


# ----------------------------------------------------------------------
# projected Newton
# ----------------------------------------------------------------------
def _modified_inverse_apply(H, g):
    """Solve with |H| after eigenvalue flipping and flooring (PD surrogate)."""
    lam, V = np.linalg.eigh(0.5 * (H + H.T))
    scale = max(1.0, float(np.max(np.abs(lam)))) if lam.size else 1.0
    lam = np.maximum(np.abs(lam), 1e-8 * scale)
    return V @ ((V.T @ g) / lam)


def newton_box(fgh, x0, config=None, bounds=None, f=None) -> InferenceResult:
    """Projected Newton method on a box.

    Parameters
    ----------
    fgh : callable
        ``fgh(x)`` returns ``(value, gradient)`` or ``(value, gradient,
        hessian)``. The exact Hessian is used when supplied and the dimension
        is at most ``config.hessian_max_dim``; otherwise BFGS updates are used.
    x0 : ParameterVector or array_like
        Starting point, projected onto the box.
    f : callable, optional
        Cheaper value-only evaluation for line search trials.

    Notes
    -----
    Coordinates sitting on a bound with the gradient pushing outward are
    frozen for the step; the others take a Newton step with an
    eigenvalue-modified Hessian. An Armijo backtracking search along the
    projection arc keeps every trial point inside the box.
    """
    config = config or OptimizerConfig()
    x, bounds = _unpack_start(x0, bounds)
    start = x.copy()
    n = x.size
    lo, hi = bounds.lower, bounds.upper
    nevals = 0

    def full(z):
        nonlocal nevals
        nevals += 1
        out = fgh(z)
        fz, gz = float(out[0]), np.asarray(out[1], dtype=float)
        Hz = out[2] if len(out) > 2 else None
        if Hz is not None:
            Hz = np.asarray(Hz, dtype=float)
        return (fz if not math.isnan(fz) else math.inf), gz, Hz

    def value(z):
        nonlocal nevals
        if f is None:
            return full(z)[0]
        nevals += 1
        v = float(f(z))
        return v if not math.isnan(v) else math.inf

    fx, g, H = full(x)
    use_exact = H is not None and n <= config.hessian_max_dim
    B = np.eye(n)
    bfgs_scaled = False
    trace = [fx]
    converged = False
    message = "iteration budget exhausted"
    it = 0
    pgnorm = math.inf
    prev_x = None

    for it in range(1, config.max_iterations + 1):
        if not math.isfinite(fx):
            message = "objective not finite at current iterate"
            break
        if not np.all(np.isfinite(g)) or (use_exact and not np.all(np.isfinite(H))):
            if prev_x is None:
                message = "non-finite derivatives at the starting point"
                break
            # shrink back toward the previous iterate
            x = bounds.project(prev_x + 0.5 * (x - prev_x))
            fx, g, H = full(x)
            trace.append(min(trace[-1], fx))
            continue
        pg = x - bounds.project(x - g)
        pgnorm = float(np.max(np.abs(pg))) if n else 0.0
        if pgnorm <= config.gtol:
            converged, message = True, ""
            break
        if nevals >= config.max_evaluations:
            message = "evaluation budget exhausted"
            break

        tiny = 1e-12 * (1.0 + np.abs(x))
        active = ((x <= lo + tiny) & (g > 0)) | ((x >= hi - tiny) & (g < 0))
        free = ~active
        d = -g.copy()
        if free.any():
            Hm = H if use_exact else B
            Hff = Hm[np.ix_(free, free)]
            d[free] = -_modified_inverse_apply(Hff, g[free])
        if not np.all(np.isfinite(d)) or float(g @ d) >= 0:
            d = -g

        alpha = 1.0
        accepted = False
        best_trial = math.inf
        for _ in range(60):
            xn = bounds.project(x + alpha * d)
            if np.array_equal(xn, x):
                break
            fn = value(xn)
            best_trial = min(best_trial, fn)
            if math.isfinite(fn) and fn <= fx + 1e-4 * float(g @ (xn - x)):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            if math.isfinite(best_trial) and best_trial - fx <= config.ftol * (1.0 + abs(fx)):
                converged, message = True, "no further decrease within tolerance"
            else:
                message = "line search failed"
            break

        s = xn - x
        prev_x, fprev, gprev = x, fx, g
        x = xn
        fx, g, H = full(x)
        trace.append(min(trace[-1], fx))
        if not use_exact and np.all(np.isfinite(g)):
            y = g - gprev
            sy = float(s @ y)
            if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
                if not bfgs_scaled:
                    B = np.eye(n) * (float(y @ y) / sy)
                    bfgs_scaled = True
                Bs = B @ s
                B = B + np.outer(y, y) / sy - np.outer(Bs, Bs) / float(s @ Bs)
        if alpha == 1.0 and np.max(np.abs(s)) <= config.xtol * (1.0 + np.max(np.abs(x))):
            converged, message = True, ""
            break
        # on kinked landscapes the projected gradient never vanishes; stall in J ends the run
        if abs(fprev - fx) <= config.ftol * (1.0 + abs(fx)):
            converged, message = True, ""
            break

    if np.all(np.isfinite(g)):
        pgnorm = float(np.max(np.abs(x - bounds.project(x - g)))) if n else 0.0
    return InferenceResult(
        theta_hat=x,
        objective_value=fx,
        iterations=it,
        evaluations=nevals,
        converged=converged and math.isfinite(fx),
        gradient_norm=pgnorm,
        message=message,
        start=start,
        trace=trace,
    )


# ----------------------------------------------------------------------
# drivers
# ----------------------------------------------------------------------
def uniform_start_sampler(bounds: Bounds, seed: int):
    """Deterministic starts: start ``i`` is uniform on the box from ``(seed, i)``."""

    def sample(i: int) -> np.ndarray:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, i])))
        return bounds.sample(rng)

    return sample


def multi_start(solve: Callable, n_starts: int, start_sampler: Callable):
    """Run ``solve(x0)`` from ``n_starts`` seeded starts.

    Returns ``(best, results)`` with results ordered by start index; the best
    is the lowest objective, ties going to the earliest start.
    """
    if n_starts < 1:
        raise ValueError("n_starts must be at least 1")
    results = []
    for i in range(n_starts):
        x0 = np.asarray(start_sampler(i), dtype=float)
        try:
            res = solve(x0)
        except OptimizationFailure as exc:
            res = InferenceResult(x0, math.inf, 0, 0, False, message=str(exc))
        res.restart_index = i
        res.start = x0
        results.append(res)
    finite = [r for r in results if np.isfinite(r.objective_value)]
    if not finite:
        raise OptimizationFailure(
            f"all {n_starts} starts failed: " + "; ".join(r.message for r in results),
            results,
        )
    best = min(finite, key=lambda r: (r.objective_value, r.restart_index))
    return best, results


@dataclass
class Problem:
    """An inference problem: objective, observations, box, optimizer.

    ``solve(R, x0)`` builds ``J`` on the quantile matrix ``R`` and runs the
    configured optimizer from ``x0`` (default: ``self.x0``).
    """

    objective: ObjectiveSpec
    obs_summary: object
    bounds: Bounds
    x0: Optional[np.ndarray] = None
    config: OptimizerConfig = field(default_factory=OptimizerConfig)
    n_sim: int = 1
    names: tuple = ()

    @property
    def n_draw(self) -> int:
        return self.objective.simulator.n_draw

    def fixed(self, R: QuantileMatrix) -> FixedObjective:
        return FixedObjective(self.objective, R, self.obs_summary)

    def quantiles(self, seed: int, n_sim: Optional[int] = None) -> QuantileMatrix:
        return make_quantile_matrix(seed, n_sim or self.n_sim, self.n_draw)

    def solve(self, R: QuantileMatrix, x0=None) -> InferenceResult:
        J = self.fixed(R)
        start = self.x0 if x0 is None else x0
        method = self.config.method
        if method == "brent":
            if self.bounds.dim != 1:
                raise ValueError("Brent's method is one-dimensional")
            g = lambda t: J(np.array([t]))  # noqa: E731
            res = brent_minimize(g, (self.bounds.lower[0], self.bounds.upper[0]), self.config)
        elif method == "nelder_mead":
            if start is None:
                raise ValueError("Nelder-Mead needs a starting point")
            res = nelder_mead(J, start, self.config, self.bounds)
        else:
            if start is None:
                raise ValueError("Newton needs a starting point")
            fgh = J.value_grad_hess if self.bounds.dim <= self.config.hessian_max_dim else J.value_and_grad
            res = newton_box(fgh, start, self.config, self.bounds, f=J)
        if start is not None:
            res.start = np.asarray(start, dtype=float)
        return res


def empirical_distribution(problem: Problem, n_repeats: int, base_seed: int, x0=None):
    """Sample of estimates from repeated single-simulation inferences.

    Repeat ``i`` uses a fresh one-row quantile matrix seeded ``base_seed + i``
    and starts from the estimate of repeat ``i - 1`` (failed repeats do not
    move the chain). Failures are kept and flagged, never dropped.
    """
    if n_repeats < 1:
        raise ValueError("n_repeats must be at least 1")
    start = problem.x0 if x0 is None else x0
    out = []
    for i in range(n_repeats):
        R = make_quantile_matrix(base_seed + i, 1, problem.n_draw)
        try:
            res = problem.solve(R, start)
        except OptimizationFailure as exc:
            s = np.asarray(start, dtype=float) if start is not None else np.full(problem.bounds.dim, np.nan)
            res = InferenceResult(s, math.inf, 0, 0, False, message=str(exc), start=s)
        res.restart_index = i
        out.append(res)
        if not res.failed:
            start = res.theta_hat.copy()
    return out


def outlier_filter(results: Sequence[InferenceResult], c: float = 3.0):
    """Split results into ``(kept, outliers)`` by objective value.

    Outliers have objective above ``median + c * IQR`` of the finite
    objectives; non-finite objectives are always outliers.
    """
    if len(results) == 0:
        raise ValueError("no results to filter")
    vals = np.array([r.objective_value for r in results], dtype=float)
    finite = np.isfinite(vals)
    if not finite.any():
        return [], list(results)
    q1, med, q3 = np.percentile(vals[finite], [25, 50, 75])
    threshold = med + c * (q3 - q1)
    flag = ~finite | (vals > threshold)
    kept = [r for r, fl in zip(results, flag) if not fl]
    outliers = [r for r, fl in zip(results, flag) if fl]
    return kept, outliers


def with_method(config: OptimizerConfig, method: str) -> OptimizerConfig:
    return replace(config, method=method)
