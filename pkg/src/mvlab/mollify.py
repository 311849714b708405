"""Compactly supported approximate identity and everything smoothed with it.

Convention: ``h_delta(x) = delta**-d * h(x / delta)`` with ``h`` the
normalized bump ``c_d * exp(-1 / (1 - |x|^2))`` on the open unit ball, so
``h_delta`` is supported in the closed ball of radius ``delta`` and
concentrates to a point mass as ``delta -> 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from mvlab import kernels
from mvlab.errors import InputError, NumericError
from mvlab.measures import EmpiricalMeasure, GridMeasure, as_batch

MIN_DELTA = 1e-8
QUAD_NODES = 64
# grid nodes per delta along each axis for the gridded drift path
GRID_NODES = {1: 32, 2: 8}


def bump(r2) -> np.ndarray:
    """Unnormalized profile ``exp(-1/(1-r2))`` for ``r2 < 1``, else 0."""
    r2 = np.asarray(r2, dtype=np.float64)
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


def _sphere_area(d: int) -> float:
    return 2.0 * math.pi ** (d / 2) / special.gamma(d / 2)


def _radial_moment(d: int, power: int) -> float:
    val, _ = integrate.quad(lambda r: r ** power * math.exp(-1.0 / (1.0 - r * r)),
                            0.0, 1.0, epsabs=1e-15, epsrel=1e-13, limit=200)
    return val


@lru_cache(maxsize=None)
def norm_const(d: int) -> float:
    """Constant making the bump integrate to one over R^d."""
    return 1.0 / (_sphere_area(d) * _radial_moment(d, d - 1))


@lru_cache(maxsize=None)
def profile_std(d: int) -> float:
    """Per-axis standard deviation of the unit-radius normalized bump."""
    second = norm_const(d) * _sphere_area(d) * _radial_moment(d, d + 1)
    return math.sqrt(second / d)


@dataclass(frozen=True)
class MollifierSpec:
    """The bump profile in dimension ``d`` at scale ``delta``."""

    d: int
    delta: float

    def __post_init__(self):
        if self.d < 1:
            raise InputError(f"dimension must be >= 1, got {self.d}")
        if not (math.isfinite(self.delta) and self.delta > 0):
            raise InputError(f"delta must be positive, got {self.delta}")
        if self.delta < MIN_DELTA:
            raise InputError(f"delta below {MIN_DELTA} is not supported")

    @property
    def support_radius(self) -> float:
        return self.delta

    @property
    def norm_const(self) -> float:
        return norm_const(self.d)

    def profile(self, x) -> np.ndarray:
        """Unit-scale normalized profile ``h(x)``."""
        x = np.asarray(x, dtype=np.float64)
        return self.norm_const * bump(np.sum(x * x, axis=-1))

    def __call__(self, x) -> np.ndarray:
        return eval_mollifier(self, x)


def _points(x, d):
    x = np.asarray(x, dtype=np.float64)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != d:
        raise InputError(f"points must have trailing dimension {d}")
    return x


def eval_mollifier(spec: MollifierSpec, x) -> np.ndarray:
    """``h_delta(x)``; ``x`` has trailing axis ``d`` (a bare scalar is fine in 1-D)."""
    x = _points(x, spec.d)
    if not np.all(np.isfinite(x)):
        raise InputError("mollifier evaluated at a non-finite point")
    u = x / spec.delta
    return spec.norm_const / spec.delta ** spec.d * bump(np.sum(u * u, axis=-1))


def smooth_empirical(positions, spec: MollifierSpec, queries) -> np.ndarray:
    """Smoothed empirical density ``(1/n) sum_i h_delta(X_i - y)`` at each query.

    Unbatched ``(n, d)`` input returns shape ``(q,)``; batched ``(R, n, d)``
    returns ``(R, q)``.
    """
    pos = np.asarray(positions, dtype=np.float64)
    if pos.size == 0:
        raise InputError("smoothed empirical measure needs at least one particle")
    batched = pos.ndim == 3
    atoms = as_batch(pos, spec.d)
    qs = as_batch(queries, spec.d)
    if qs.shape[0] != atoms.shape[0]:
        qs = np.broadcast_to(qs, (atoms.shape[0],) + qs.shape[1:])
    out = kernels.kde_points(atoms, qs, spec.delta, spec.norm_const)
    return out if batched else out[0]


class SmoothedEmpirical(EmpiricalMeasure):
    """The measure ``mu * h_delta`` for atomic ``mu``; it carries its own density."""

    def __init__(self, atoms, spec: MollifierSpec):
        super().__init__(atoms)
        self.spec = spec
        self.density_source = lambda y: kernels.kde_points(
            self.atoms, np.broadcast_to(y, (self.atoms.shape[0],) + y.shape[1:]),
            spec.delta, spec.norm_const)


@lru_cache(maxsize=None)
def ball_quadrature(d: int, nodes: int = QUAD_NODES) -> tuple[np.ndarray, np.ndarray]:
    """Midpoint nodes of a ``nodes**d`` grid on ``[-1, 1]^d`` inside the unit ball,
    with weights proportional to ``h`` and normalized to sum exactly to one."""
    axis = -1.0 + (np.arange(nodes) + 0.5) * (2.0 / nodes)
    mesh = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    w = bump(np.sum(mesh * mesh, axis=-1))
    keep = w > 0
    u, w = mesh[keep], w[keep]
    return u, w / w.sum()


def smooth_drift(b, spec: MollifierSpec, t: float, x, lam, nodes: int = QUAD_NODES):
    """``(b_t(., lam) * h_delta)(x)`` by midpoint quadrature over the support ball.

    ``b`` is called as ``b(t, y, lam)`` with ``y`` of shape ``(R, Q, d)``.
    """
    xs = np.asarray(x, dtype=np.float64)
    batched = xs.ndim == 3
    xs = as_batch(xs, spec.d)
    u, w = ball_quadrature(spec.d, nodes)
    R, q, d = xs.shape
    out = np.empty((R, q, d))
    step = max(1, (1 << 20) // (R * u.shape[0]))
    for a in range(0, q, step):
        xb = xs[:, a:a + step]
        y = xb[:, :, None, :] - spec.delta * u[None, None]
        vals = np.asarray(b(t, y.reshape(R, -1, d), lam), dtype=np.float64)
        vals = vals.reshape(R, xb.shape[1], u.shape[0], d)
        if not np.all(np.isfinite(vals)):
            r, i, k, _ = np.argwhere(~np.isfinite(vals))[0]
            raise NumericError(f"non-finite drift sample at y={y[r, i, k]} (t={t})")
        out[:, a:a + step] = np.einsum("rqkd,k->rqd", vals, w)
    return out if batched else out[0]


def _taps(spec: MollifierSpec, dx: float) -> np.ndarray:
    w = int(math.ceil(spec.delta / dx))
    offs = np.arange(-w, w + 1) * (dx / spec.delta)
    if spec.d == 1:
        taps = bump(offs * offs)
    else:
        taps = bump(offs[:, None] ** 2 + offs[None, :] ** 2)
    return taps / taps.sum()


def drift_grid(drift, t: float, atoms, spec: MollifierSpec, cover=None,
               nodes_per_delta: int | None = None) -> tuple[GridMeasure, np.ndarray]:
    """Smoothed density and smoothed drift ``b^delta(., mu^delta)`` on a grid.

    The grid of replication ``r`` covers the atoms (and ``cover`` points) with a
    margin of ``delta`` plus three cells.  Returns the density as a
    :class:`GridMeasure` and the mollified drift values ``(R, *shape, d)``.
    """
    d = spec.d
    if d > 2:
        raise InputError("the gridded drift path supports d <= 2; use mode='direct'")
    atoms = as_batch(atoms, d)
    npd = nodes_per_delta or GRID_NODES[d]
    dx = spec.delta / npd
    pts = atoms if cover is None else np.concatenate([atoms, as_batch(cover, d)], axis=1)
    margin = spec.delta + 3 * dx
    lo = pts.min(axis=1) - margin
    hi = pts.max(axis=1) + margin
    extent = np.ceil((hi - lo) / dx).astype(np.int64) + 1
    shape = tuple(int(s) for s in extent.max(axis=0))
    if d == 1:
        rho = kernels.kde_grid_1d(atoms[..., 0], lo[:, 0], dx, shape[0], spec.delta,
                                  spec.norm_const)
    else:
        rho = kernels.kde_grid_2d(atoms, lo, dx, shape[0], shape[1], spec.delta,
                                  spec.norm_const)
    gm = GridMeasure(lo=lo, dx=dx, values=rho, extent=extent, atoms=atoms)
    bvals = np.asarray(drift.on_grid(t, gm), dtype=np.float64)
    if not np.all(np.isfinite(bvals)):
        idx = np.argwhere(~np.isfinite(bvals))[0]
        raise NumericError(f"non-finite drift sample at grid node {tuple(idx[:-1])} (t={t})")
    taps = _taps(spec, dx)
    bd = kernels.conv_same_1d(bvals, taps) if d == 1 else kernels.conv_same_2d(bvals, taps)
    return gm, bd


def smoothed_drift_at(drift, t: float, atoms, queries, spec: MollifierSpec,
                      mode: str = "grid", nodes_per_delta: int | None = None) -> np.ndarray:
    """``b^delta_t(x, mu^delta)`` at ``queries`` for atomic ``mu`` (batched)."""
    atoms = as_batch(atoms, spec.d)
    queries = as_batch(queries, spec.d)
    if getattr(drift, "is_zero", False):
        return np.zeros(queries.shape)
    if getattr(drift, "constant", None) is not None:
        return np.broadcast_to(np.asarray(drift.constant), queries.shape).copy()
    if mode == "direct":
        return smooth_drift(drift, spec, t, queries, SmoothedEmpirical(atoms, spec))
    if mode != "grid":
        raise InputError(f"unknown drift mode {mode!r}")
    gm, bd = drift_grid(drift, t, atoms, spec, cover=queries, nodes_per_delta=nodes_per_delta)
    if spec.d == 1:
        return kernels.interp_1d(bd, gm.lo[:, 0], gm.dx, queries[..., 0])
    return kernels.interp_2d(bd, gm.lo, gm.dx, queries)
