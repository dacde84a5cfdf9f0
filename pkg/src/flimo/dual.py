"""Forward-mode automatic differentiation on numpy arrays.

A :class:`Dual` carries a value array together with its gradient with
respect to a small set of active parameters, and optionally the Hessian
(second-order forward mode). The derivative axes are always trailing::

    val.shape   == S
    grad.shape  == S + (n,)
    hess.shape  == S + (n, n)      # or None for first-order propagation

Plain floats and arrays mix freely with duals. The module level functions
(:func:`exp`, :func:`log`, :func:`sqrt`, ...) dispatch on the argument type
so that model code is written once and runs on reals or duals.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Dual",
    "variables",
    "value",
    "is_dual",
    "exp",
    "log",
    "log1p",
    "sqrt",
    "tanh",
    "absolute",
    "clip",
    "where",
    "maximum_const",
    "total",
    "average",
    "stack",
    "take_sorted",
]


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


class Dual:
    """Array of values with forward-propagated first (and second) derivatives."""

    __slots__ = ("val", "grad", "hess")
    __array_ufunc__ = None  # make numpy defer to the reflected operators

    def __init__(self, val, grad, hess=None):
        self.val = np.asarray(val, dtype=float)
        self.grad = np.asarray(grad, dtype=float)
        self.hess = None if hess is None else np.asarray(hess, dtype=float)

    # ------------------------------------------------------------------
    @property
    def nvars(self) -> int:
        return self.grad.shape[-1]

    @property
    def order(self) -> int:
        return 1 if self.hess is None else 2

    @property
    def shape(self):
        return self.val.shape

    @property
    def ndim(self):
        return self.val.ndim

    def __len__(self):
        return len(self.val)

    def __repr__(self):
        return f"Dual(val={self.val!r}, grad={self.grad!r})"

    # -- construction helpers -------------------------------------------
    def _lift(self, c):
        """Promote a constant to a dual with zero derivatives."""
        c = np.asarray(c, dtype=float)
        shape = np.broadcast_shapes(c.shape, self.val.shape)
        n = self.nvars
        grad = np.zeros(shape + (n,))
        hess = None if self.hess is None else np.zeros(shape + (n, n))
        return Dual(np.broadcast_to(c, shape), grad, hess)

    def _chain(self, f, df, d2f):
        """Apply a scalar function given its value and two derivatives at val."""
        grad = df[..., None] * self.grad
        hess = None
        if self.hess is not None:
            hess = df[..., None, None] * self.hess + d2f[..., None, None] * _outer(
                self.grad, self.grad
            )
        return Dual(f, grad, hess)

    # -- arithmetic ----------------------------------------------------
    def __neg__(self):
        return Dual(-self.val, -self.grad, None if self.hess is None else -self.hess)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Dual):
            hess = None
            if self.hess is not None and other.hess is not None:
                hess = self.hess + other.hess
            return Dual(self.val + other.val, self.grad + other.grad, hess)
        other = np.asarray(other, dtype=float)
        val = self.val + other
        grad = np.broadcast_to(self.grad, val.shape + (self.nvars,))
        hess = None
        if self.hess is not None:
            hess = np.broadcast_to(self.hess, val.shape + (self.nvars, self.nvars))
        return Dual(val, grad, hess)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual):
            a, b = self, other
            grad = a.val[..., None] * b.grad + b.val[..., None] * a.grad
            hess = None
            if a.hess is not None and b.hess is not None:
                hess = (
                    a.val[..., None, None] * b.hess
                    + b.val[..., None, None] * a.hess
                    + _outer(a.grad, b.grad)
                    + _outer(b.grad, a.grad)
                )
            return Dual(a.val * b.val, grad, hess)
        c = np.asarray(other, dtype=float)
        hess = None if self.hess is None else self.hess * c[..., None, None]
        return Dual(self.val * c, self.grad * c[..., None], hess)

    __rmul__ = __mul__

    def reciprocal(self):
        v = self.val
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / v
            return self._chain(inv, -inv * inv, 2.0 * inv * inv * inv)

    def __truediv__(self, other):
        if isinstance(other, Dual):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, Dual):
            return exp(p * log(self))
        p = float(p)
        v = self.val
        if p == 2.0:
            return self * self
        with np.errstate(divide="ignore", invalid="ignore"):
            return self._chain(v**p, p * v ** (p - 1.0), p * (p - 1.0) * v ** (p - 2.0))

    def __rpow__(self, base):
        return exp(self * np.log(base))

    def __abs__(self):
        return absolute(self)

    # -- comparisons act on the value part -------------------------------
    def __lt__(self, other):
        return self.val < value(other)

    def __le__(self, other):
        return self.val <= value(other)

    def __gt__(self, other):
        return self.val > value(other)

    def __ge__(self, other):
        return self.val >= value(other)

    def __float__(self):
        return float(self.val)

    # -- indexing on the leading (value) axes ---------------------------
    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        if any(k is Ellipsis for k in key):
            raise IndexError("Dual indexing does not support Ellipsis")
        hess = None if self.hess is None else self.hess[key]
        return Dual(self.val[key], self.grad[key], hess)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        n = self.nvars
        hess = None if self.hess is None else self.hess.reshape(shape + (n, n))
        return Dual(self.val.reshape(shape), self.grad.reshape(shape + (n,)), hess)

    def sum(self, axis=None):
        return total(self, axis)

    def mean(self, axis=None):
        return average(self, axis)


# ----------------------------------------------------------------------
def variables(x, order: int = 1):
    """Seed independent dual scalars for each entry of ``x``.

    Parameters
    ----------
    x : array_like, shape (n,)
        Point at which derivatives are taken.
    order : {1, 2}
        Propagate gradients only, or gradients and Hessians.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    eye = np.eye(n)
    out = []
    for i in range(n):
        hess = np.zeros((n, n)) if order >= 2 else None
        out.append(Dual(x[i], eye[i].copy(), hess))
    return out


def is_dual(x) -> bool:
    return isinstance(x, Dual)


def value(x):
    """Strip derivative information."""
    return x.val if isinstance(x, Dual) else x


# -- elementary functions -------------------------------------------------
def exp(x):
    if isinstance(x, Dual):
        e = np.exp(x.val)
        return x._chain(e, e, e)
    return np.exp(x)


def log(x):
    if isinstance(x, Dual):
        v = x.val
        with np.errstate(divide="ignore", invalid="ignore"):
            return x._chain(np.log(v), 1.0 / v, -1.0 / (v * v))
    return np.log(x)


def log1p(x):
    if isinstance(x, Dual):
        v1 = 1.0 + x.val
        return x._chain(np.log1p(x.val), 1.0 / v1, -1.0 / (v1 * v1))
    return np.log1p(x)


def sqrt(x):
    """Square root; derivative set to 0 at 0 (subgradient convention)."""
    if isinstance(x, Dual):
        s = np.sqrt(x.val)
        pos = s > 0
        safe = np.where(pos, s, 1.0)
        d1 = np.where(pos, 0.5 / safe, 0.0)
        d2 = np.where(pos, -0.25 / (safe * safe * safe), 0.0)
        return x._chain(s, d1, d2)
    return np.sqrt(x)


def tanh(x):
    if isinstance(x, Dual):
        t = np.tanh(x.val)
        d1 = 1.0 - t * t
        return x._chain(t, d1, -2.0 * t * d1)
    return np.tanh(x)


def absolute(x):
    """|x| with derivative sign(x), second derivative 0 and subgradient 0 at 0."""
    if isinstance(x, Dual):
        s = np.sign(x.val)
        return x._chain(np.abs(x.val), s, np.zeros_like(s))
    return np.abs(x)


def clip(x, lo, hi):
    """Clip to [lo, hi]; derivatives vanish where the bound is active."""
    if isinstance(x, Dual):
        v = np.clip(x.val, lo, hi)
        inside = (x.val > lo) & (x.val < hi)
        z = inside.astype(float)
        return x._chain(v, z, np.zeros_like(z))
    return np.clip(x, lo, hi)


def maximum_const(x, c):
    if isinstance(x, Dual):
        keep = (x.val > c).astype(float)
        return x._chain(np.maximum(x.val, c), keep, np.zeros_like(keep))
    return np.maximum(x, c)


def where(cond, a, b):
    """Elementwise select, valid for any mix of duals and constants."""
    if not isinstance(a, Dual) and not isinstance(b, Dual):
        return np.where(cond, a, b)
    ref = a if isinstance(a, Dual) else b
    if not isinstance(a, Dual):
        a = ref._lift(a)
    if not isinstance(b, Dual):
        b = ref._lift(b)
    cond = np.asarray(cond)
    val = np.where(cond, a.val, b.val)
    grad = np.where(cond[..., None], a.grad, b.grad)
    hess = None
    if a.hess is not None and b.hess is not None:
        hess = np.where(cond[..., None, None], a.hess, b.hess)
    return Dual(val, grad, hess)


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def total(x, axis=None):
    if isinstance(x, Dual):
        ax = _norm_axis(axis, x.val.ndim)
        hess = None if x.hess is None else x.hess.sum(axis=ax)
        return Dual(x.val.sum(axis=ax), x.grad.sum(axis=ax), hess)
    return np.sum(x, axis=axis)


def average(x, axis=None):
    if isinstance(x, Dual):
        ax = _norm_axis(axis, x.val.ndim)
        n = int(np.prod([x.val.shape[a] for a in ax])) if ax else 1
        return total(x, axis) * (1.0 / n)
    return np.mean(x, axis=axis)


def stack(items, axis=0):
    """Stack duals and constants along a new leading-side axis."""
    if not any(isinstance(i, Dual) for i in items):
        return np.stack([np.asarray(i, dtype=float) for i in items], axis=axis)
    ref = next(i for i in items if isinstance(i, Dual))
    duals = [i if isinstance(i, Dual) else ref._lift(i) for i in items]
    shape = np.broadcast_shapes(*(d.val.shape for d in duals))
    ndim = len(shape)
    if axis < 0:
        axis += ndim + 1
    n = ref.nvars
    val = np.stack([np.broadcast_to(d.val, shape) for d in duals], axis=axis)
    grad = np.stack([np.broadcast_to(d.grad, shape + (n,)) for d in duals], axis=axis)
    hess = None
    if all(d.hess is not None for d in duals):
        hess = np.stack(
            [np.broadcast_to(d.hess, shape + (n, n)) for d in duals], axis=axis
        )
    return Dual(val, grad, hess)


def take_sorted(x, axis=0):
    """Sort along ``axis`` by value, carrying derivatives with each entry."""
    if not isinstance(x, Dual):
        return np.sort(x, axis=axis)
    axis = axis % x.val.ndim
    idx = np.argsort(x.val, axis=axis, kind="stable")
    val = np.take_along_axis(x.val, idx, axis=axis)
    grad = np.take_along_axis(x.grad, idx[..., None], axis=axis)
    hess = None
    if x.hess is not None:
        hess = np.take_along_axis(x.hess, idx[..., None, None], axis=axis)
    return Dual(val, grad, hess)
