"""Schwartz test functions with analytic gradients and Hessians.

Every function maps points ``x`` of shape ``(..., d)`` to values ``(...)``,
gradients ``(..., d)`` and Hessians ``(..., d, d)``.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from mvlab.errors import InputError
from mvlab.spectral.hermite import _check_degree, hermite_derivative_tables


def _pts(x, d):
    x = np.asarray(x, dtype=np.float64)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != d:
        raise InputError(f"test function expects points with trailing dimension {d}")
    return x


class TestFunction:
    """A smooth test function with value, gradient and Hessian callables.

    ``decay_radius`` bounds the box outside which the function and its first
    two derivatives, weighted by ``1 + |x|^2``, are below 1e-10.
    """

    __test__ = False

    def __init__(self, name: str, d: int, value: Callable, grad: Callable, hess: Callable,
                 decay_radius: float, max_order: int = 2):
        self.name = name
        self.d = d
        self._value, self._grad, self._hess = value, grad, hess
        self.decay_radius = float(decay_radius)
        self.max_order = max_order

    def __repr__(self):
        return f"TestFunction({self.name})"

    def __call__(self, x) -> np.ndarray:
        return self._value(_pts(x, self.d))

    def grad(self, x) -> np.ndarray:
        return self._grad(_pts(x, self.d))

    def hess(self, x) -> np.ndarray:
        return self._hess(_pts(x, self.d))

    def __add__(self, other: "TestFunction") -> "TestFunction":
        if not isinstance(other, TestFunction):
            return NotImplemented
        _same_dim(self, other)
        return TestFunction(f"({self.name} + {other.name})", self.d,
                            lambda x: self._value(x) + other._value(x),
                            lambda x: self._grad(x) + other._grad(x),
                            lambda x: self._hess(x) + other._hess(x),
                            max(self.decay_radius, other.decay_radius),
                            min(self.max_order, other.max_order))

    def __sub__(self, other: "TestFunction") -> "TestFunction":
        return self + (-1.0) * other

    def __neg__(self) -> "TestFunction":
        return (-1.0) * self

    def __mul__(self, other) -> "TestFunction":
        if isinstance(other, TestFunction):
            return _product(self, other)
        a = float(other)
        return TestFunction(f"{a!r}*{self.name}", self.d,
                            lambda x: a * self._value(x),
                            lambda x: a * self._grad(x),
                            lambda x: a * self._hess(x),
                            self.decay_radius, self.max_order)

    __rmul__ = __mul__


def _same_dim(f, g):
    if f.d != g.d:
        raise InputError(f"dimension mismatch: {f.d} vs {g.d}")


def _product(f: TestFunction, g: TestFunction) -> TestFunction:
    _same_dim(f, g)

    def grad(x):
        return f._grad(x) * g._value(x)[..., None] + f._value(x)[..., None] * g._grad(x)

    def hess(x):
        gf, gg = f._grad(x), g._grad(x)
        cross = gf[..., :, None] * gg[..., None, :]
        return (f._hess(x) * g._value(x)[..., None, None]
                + f._value(x)[..., None, None] * g._hess(x)
                + cross + np.swapaxes(cross, -1, -2))

    return TestFunction(f"({f.name} * {g.name})", f.d,
                        lambda x: f._value(x) * g._value(x), grad, hess,
                        min(f.decay_radius, g.decay_radius), min(f.max_order, g.max_order))


def _hermite_radius(k: int, tol: float = 1e-10) -> float:
    x = np.linspace(0.0, 2 * math.sqrt(k) + 40.0, 8001)
    v, d1, d2 = hermite_derivative_tables(k, x)
    w = (1 + x * x) * np.max(np.abs(np.stack([v[-1], d1[-1], d2[-1]])), axis=0)
    big = np.nonzero(w > tol)[0]
    return float(x[big[-1] + 1]) if big.size else 1.0


def hermite(k, d: int | None = None) -> TestFunction:
    """The Hermite function ``h_k`` for a (1-based) multi-index ``k``."""
    ks = (int(k),) if np.ndim(k) == 0 else tuple(int(v) for v in k)
    if d is not None and d != len(ks):
        raise InputError("multi-index length must equal d")
    for v in ks:
        _check_degree(v)
    d = len(ks)

    def axes(x):
        return [tuple(t[-1] for t in hermite_derivative_tables(v, x[..., a]))
                for a, v in enumerate(ks)]

    def value(x):
        out = np.ones(x.shape[:-1])
        for v, _, _ in axes(x):
            out = out * v
        return out

    def grad(x):
        ax = axes(x)
        out = np.empty(x.shape)
        for a in range(d):
            g = np.ones(x.shape[:-1])
            for b in range(d):
                g = g * (ax[b][1] if b == a else ax[b][0])
            out[..., a] = g
        return out

    def hess(x):
        ax = axes(x)
        out = np.empty(x.shape + (d,))
        for a in range(d):
            for c in range(d):
                h = np.ones(x.shape[:-1])
                for b in range(d):
                    if a == c == b:
                        h = h * ax[b][2]
                    elif b == a or b == c:
                        h = h * ax[b][1]
                    else:
                        h = h * ax[b][0]
                out[..., a, c] = h
        return out

    return TestFunction(f"h{list(ks)}", d, value, grad, hess,
                        max(_hermite_radius(v) for v in ks))


def gaussian_bump(center=0.0, width: float = 1.0, d: int = 1) -> TestFunction:
    """``exp(-|x - c|^2 / (2 w^2))``."""
    if not width > 0:
        raise InputError("width must be positive")
    c = np.broadcast_to(np.asarray(center, dtype=np.float64), (d,)).copy()
    w2 = width * width

    def value(x):
        return np.exp(-0.5 * np.sum((x - c) ** 2, axis=-1) / w2)

    def grad(x):
        return -(x - c) / w2 * value(x)[..., None]

    def hess(x):
        y = x - c
        outer = y[..., :, None] * y[..., None, :] / (w2 * w2) - np.eye(d) / w2
        return outer * value(x)[..., None, None]

    radius = float(np.abs(c).max()) + width * 10.0 + 2.0
    return TestFunction(f"gauss(c={c.tolist()}, w={width})", d, value, grad, hess, radius)


def compact_bump(center=0.0, radius: float = 1.0, d: int = 1) -> TestFunction:
    """``exp(-1 / (1 - |x - c|^2 / r^2))`` inside the ball, 0 outside."""
    if not radius > 0:
        raise InputError("radius must be positive")
    c = np.broadcast_to(np.asarray(center, dtype=np.float64), (d,)).copy()
    r2 = radius * radius

    def parts(x):
        y = x - c
        s = np.sum(y * y, axis=-1) / r2
        inside = s < 1
        q = np.where(inside, 1.0 / np.where(inside, 1 - s, 1.0), 0.0)
        f = np.where(inside, np.exp(-q), 0.0)
        return y, q, f

    def value(x):
        return parts(x)[2]

    def grad(x):
        y, q, f = parts(x)
        # d f / d s = -f q^2 and grad s = 2 y / r^2
        return (-f * q * q)[..., None] * (2 * y / r2)

    def hess(x):
        y, q, f = parts(x)
        fs = -f * q * q
        fss = f * (q ** 4 - 2 * q ** 3)
        gs = 2 * y / r2
        return (fss[..., None, None] * gs[..., :, None] * gs[..., None, :]
                + fs[..., None, None] * (2 / r2) * np.eye(d))

    return TestFunction(f"bump(c={c.tolist()}, r={radius})", d, value, grad, hess,
                        float(np.abs(c).max()) + radius)


def weighted_derivative_max(phi: TestFunction, x: np.ndarray, m: int) -> np.ndarray:
    """``max_{|alpha| <= m} (1 + |x|^2)^(m/2) |d^alpha phi(x)|`` pointwise."""
    out = np.abs(phi(x))
    if m >= 1:
        out = np.maximum(out, np.abs(phi.grad(x)).max(axis=-1))
    if m >= 2:
        out = np.maximum(out, np.abs(phi.hess(x)).reshape(x.shape[:-1] + (-1,)).max(axis=-1))
    return (1 + np.sum(x * x, axis=-1)) ** (0.5 * m) * out


def seminorm_star(phi: TestFunction, m: int, resolution: int | None = None) -> float:
    """``max_{|alpha| <= m} sup_x (1 + |x|^2)^(m/2) |d^alpha phi(x)|``.

    Dense grid over the decay box, then local refinement around the best cells.
    """
    if m < 0 or m > phi.max_order:
        raise InputError(f"seminorm order {m} exceeds available derivative order "
                         f"{phi.max_order}")
    d = phi.d
    if d > 2:
        raise InputError("seminorm evaluation is implemented for d <= 2")
    R = phi.decay_radius
    res = resolution or (20001 if d == 1 else 801)
    ax = np.linspace(-R, R, res)
    h = ax[1] - ax[0]
    grid = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1).reshape(-1, d)
    vals = weighted_derivative_max(phi, grid, m)
    best = float(vals.max())
    centers = grid[np.argsort(vals)[-8:]]
    loc = np.linspace(-1.0, 1.0, 41 if d == 1 else 21)
    for c in centers:
        half = h
        for _ in range(4):
            mesh = np.stack(np.meshgrid(*([loc * half] * d), indexing="ij"),
                            axis=-1).reshape(-1, d) + c
            v = weighted_derivative_max(phi, mesh, m)
            i = int(np.argmax(v))
            best = max(best, float(v[i]))
            c = mesh[i]
            half = half / 10
    return best
