"""Hermite functions (1-based) and Hermite-Fourier coefficient tables.

``h_1(x) = (2 pi)^(-1/4) exp(-x^2/4)`` and
``h_{k+2} = x/sqrt(k+1) h_{k+1} - sqrt(k/(k+1)) h_k``, i.e. the probabilists'
Hermite polynomials times the square root of the standard Gaussian density,
normalized in ``L^2(dx)``.  Multi-indices live in ``{1, 2, ...}^d``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from mvlab.errors import CutoffError, InputError

MAX_DEGREE = 512
DEFAULT_CUTOFF = {1: 60, 2: 24}
SUP_BOUND_1D = (2 * math.pi) ** 0.25


def _check_degree(k: int) -> None:
    if k < 1:
        raise InputError(f"Hermite indices start at 1, got {k}")
    if k > MAX_DEGREE:
        raise CutoffError(f"Hermite degree {k} exceeds the validated range {MAX_DEGREE}")


def hermite_table(N: int, x) -> np.ndarray:
    """Rows ``h_1(x), ..., h_N(x)``; shape ``(N,) + x.shape``."""
    _check_degree(N)
    return _table(N, x)


def _table(N: int, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty((N,) + x.shape)
    out[0] = (2 * math.pi) ** -0.25 * np.exp(-0.25 * x * x)
    if N > 1:
        out[1] = x * out[0]
    for j in range(1, N - 1):
        out[j + 1] = (x * out[j] - math.sqrt(j) * out[j - 1]) / math.sqrt(j + 1)
    return out


def hermite_derivative_tables(N: int, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Values, first and second derivatives of ``h_1..h_N`` at ``x``."""
    _check_degree(N)
    x = np.asarray(x, dtype=np.float64)
    ext = _table(N + 1, x)
    vals = ext[:N]
    d1 = np.empty_like(vals)
    for j in range(N):
        lower = ext[j - 1] if j >= 1 else 0.0
        d1[j] = 0.5 * math.sqrt(j) * lower - 0.5 * math.sqrt(j + 1) * ext[j + 1]
    j = np.arange(N).reshape((N,) + (1,) * x.ndim)
    d2 = (0.25 * x * x - j - 0.5) * vals
    return vals, d1, d2


def hermite_eval(k, x) -> np.ndarray:
    """``h_k(x)`` for a multi-index ``k``; ``x`` has trailing axis ``len(k)``
    (a bare array is fine when ``k`` is a single integer)."""
    ks = (int(k),) if np.ndim(k) == 0 else tuple(int(v) for v in k)
    for v in ks:
        _check_degree(v)
    x = np.asarray(x, dtype=np.float64)
    if len(ks) == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        return hermite_table(ks[0], x)[-1]
    if x.shape[-1] != len(ks):
        raise InputError("point dimension does not match the multi-index")
    out = np.ones(x.shape[:-1])
    for a, v in enumerate(ks):
        out = out * hermite_table(v, x[..., a])[-1]
    return out


@dataclass(frozen=True)
class HermiteCoeffTable:
    """Coefficients ``lambda[h_k]`` for ``k`` in ``{1..N}^d``; entry
    ``coeffs[k_1 - 1, ..., k_d - 1]``."""

    d: int
    max_degree: int
    coeffs: np.ndarray
    source: str
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.float64)
        if c.shape != (self.max_degree,) * self.d:
            raise InputError(f"coefficient array has shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise InputError("coefficient table has non-finite entries")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def scaled(self, a: float) -> "HermiteCoeffTable":
        return HermiteCoeffTable(self.d, self.max_degree, a * self.coeffs,
                                 f"{a!r} * {self.source}", self.warnings)

    def truncated(self, N: int) -> "HermiteCoeffTable":
        if N > self.max_degree:
            raise InputError("cannot extend a table beyond its cutoff")
        return HermiteCoeffTable(self.d, N, self.coeffs[(slice(0, N),) * self.d],
                                 self.source, self.warnings)

    @staticmethod
    def unit(k, d: int | None = None, N: int | None = None) -> "HermiteCoeffTable":
        ks = (int(k),) if np.ndim(k) == 0 else tuple(int(v) for v in k)
        d = d or len(ks)
        N = N or max(ks)
        c = np.zeros((N,) * d)
        c[tuple(v - 1 for v in ks)] = 1.0
        return HermiteCoeffTable(d, N, c, f"h_{ks}")


def _tensor_mean(tables: list[np.ndarray], weights: np.ndarray) -> np.ndarray:
    # tables[a] has shape (N, n); contract over the atom axis
    if len(tables) == 1:
        return tables[0] @ weights
    if len(tables) == 2:
        return (tables[0] * weights) @ tables[1].T
    letters = "abcdefgh"[:len(tables)]
    spec = ",".join(f"{c}z" for c in letters) + ",z->" + letters
    return np.einsum(spec, *tables, weights)


def coeffs_of_atoms(atoms, N: int, weights=None) -> HermiteCoeffTable:
    """Exact finite sums ``sum_i w_i h_k(X_i)``."""
    x = np.asarray(atoms, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise InputError("atoms must be a non-empty (n, d) array")
    n, d = x.shape
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=np.float64)
    w = w / w.sum()
    tabs = [hermite_table(N, x[:, a]) for a in range(d)]
    return HermiteCoeffTable(d, N, _tensor_mean(tabs, w), f"atomic measure (n={n})")


def _quad_axis(N: int, radius: float, step: float = 0.02):
    L = max(radius, 2 * math.sqrt(N) + 14.0)
    m = int(math.ceil(L / step))
    x = np.linspace(-L, L, 2 * m + 1)
    return x, x[1] - x[0]


def coeffs_of_function(phi, N: int) -> HermiteCoeffTable:
    """``int phi h_k dx`` by the trapezoid rule on a box beyond both the
    function's decay radius and the oscillatory zone of ``h_N``."""
    d = phi.d
    x, h = _quad_axis(N, phi.decay_radius)
    H = hermite_table(N, x) * h
    if d == 1:
        c = H @ phi(x[:, None])
    elif d == 2:
        X, Y = np.meshgrid(x, x, indexing="ij")
        vals = phi(np.stack([X, Y], axis=-1))
        c = H @ vals @ H.T
    else:
        raise InputError("function coefficients are implemented for d <= 2")
    return HermiteCoeffTable(d, N, c, f"function {phi.name}")


def coeffs_of_grid(grid, N: int, tol: float = 1e-8) -> HermiteCoeffTable:
    """Cell sums ``sum_c h_k(x_c) f(x_c) |cell|``; warns when ``h_N`` is not
    below ``tol`` at the box edge."""
    x = grid.axis()
    H = hermite_table(N, x)
    warn = ()
    edge = float(np.abs(hermite_table(N, np.array([grid.L]))[:, 0]).max())
    if edge > tol:
        warn = (f"box half-width {grid.L} too small for cutoff {N}: "
                f"Hermite tail {edge:.2e} at the boundary",)
    H = H * grid.cell
    if grid.d == 1:
        c = H @ grid.values
    elif grid.d == 2:
        c = H @ grid.values @ H.T
    else:
        raise InputError("grid coefficients are implemented for d <= 2")
    return HermiteCoeffTable(grid.d, N, c, "density grid", warn)


def hermite_coeffs(source, max_degree: int | None = None) -> HermiteCoeffTable:
    """Hermite-Fourier coefficients of atoms, a :class:`TestFunction` or a
    :class:`DensityGrid`."""
    from mvlab.measures import EmpiricalMeasure
    from mvlab.spectral.grids import DensityGrid
    from mvlab.spectral.testfunctions import TestFunction

    if isinstance(source, TestFunction):
        N = max_degree or DEFAULT_CUTOFF.get(source.d, 24)
        _check_degree(N)
        return coeffs_of_function(source, N)
    if isinstance(source, DensityGrid):
        N = max_degree or DEFAULT_CUTOFF.get(source.d, 24)
        _check_degree(N)
        return coeffs_of_grid(source, N)
    if isinstance(source, EmpiricalMeasure):
        if source.batch_size != 1:
            raise InputError("pass one measure at a time")
        N = max_degree or DEFAULT_CUTOFF.get(source.d, 24)
        _check_degree(N)
        return coeffs_of_atoms(source.atoms[0], N, source.weights)
    a = np.asarray(source, dtype=np.float64)
    d = 1 if a.ndim <= 1 else a.shape[1]
    N = max_degree or DEFAULT_CUTOFF.get(d, 24)
    _check_degree(N)
    return coeffs_of_atoms(a.reshape(-1, d), N)


def hp_norm(table: HermiteCoeffTable, p: float) -> float:
    """``(sum_k (<k>^(p/d) c_k)^2)^(1/2)`` with ``<k> = (1 + |k|^2)^(1/2)``."""
    k = np.arange(1, table.max_degree + 1, dtype=np.float64) ** 2
    sq = np.ones((table.max_degree,) * table.d)
    for a in range(table.d):
        shape = [1] * table.d
        shape[a] = -1
        sq = sq + k.reshape(shape)
    weight = sq ** (0.5 * p / table.d)
    return float(np.sqrt(np.sum((weight * table.coeffs) ** 2)))


def pairing(lam: HermiteCoeffTable, phi: HermiteCoeffTable) -> float:
    """Truncated duality ``sum_k lam_k phi_k`` over the common cutoff."""
    if lam.d != phi.d:
        raise InputError(f"dimension mismatch: {lam.d} vs {phi.d}")
    N = min(lam.max_degree, phi.max_degree)
    sl = (slice(0, N),) * lam.d
    return float(np.sum(lam.coeffs[sl] * phi.coeffs[sl]))
