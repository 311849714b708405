"""Densities of particle flows and their regularity diagnostics.

Flows are turned into kernel density estimates (mollifier profile) on a
shared cell-centred grid over ``[-L, L]^d``; everything downstream works on
those grids: ``L^r`` norm curves with a ``c (1 ^ t)^(-gamma)`` envelope fit,
time-Hoelder fits, the ``L^1``/``L^r`` interpolation inequality and distances
between flows.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from mvlab import kernels
from mvlab.errors import CoverageError, FitError, GridError, InputError
from mvlab.mollify import norm_const, profile_std
from mvlab.particles import MeasureFlow
from mvlab.spectral.grids import DensityGrid, bessel_norm

ENVELOPE_SLACK = 0.05


def silverman_bandwidth(n: int, d: int, std: float = 1.0) -> float:
    """Support radius of the bump kernel matching the Silverman-style Gaussian
    bandwidth ``1.06 std n^(-1/(d+4))``."""
    return 1.06 * std * n ** (-1.0 / (d + 4)) / profile_std(d)


def _kde_on_box(points: np.ndarray, d: int, L: float, resolution: int,
                bandwidth: float) -> np.ndarray:
    """KDE values ``(R, *shape)`` of batched ``points`` ``(R, n, d)``."""
    if not bandwidth > 0:
        raise InputError("bandwidth must be positive")
    if np.any(np.abs(points) > L + bandwidth):
        raise CoverageError(f"particles lie outside [-{L}, {L}]^{d} by more than the "
                            f"bandwidth {bandwidth}")
    dx = 2 * L / resolution
    R = points.shape[0]
    lo = np.full((R, d), -L + 0.5 * dx)
    c = norm_const(d)
    if d == 1:
        return kernels.kde_grid_1d(points[..., 0], lo[:, 0], dx, resolution, bandwidth, c)
    if d == 2:
        return kernels.kde_grid_2d(points, lo, dx, resolution, resolution, bandwidth, c)
    raise InputError("density grids are implemented for d <= 2")


@dataclass
class DensityFlow:
    """Density grids ``values[r, j]`` of replication ``r`` at ``times[j]``."""

    times: np.ndarray
    d: int
    L: float
    resolution: int
    values: np.ndarray             # (R, J+1, *shape)
    rep_ids: np.ndarray
    bandwidth: float | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 1 + self.d:
            self.values = self.values[None]
        expect = (self.times.size,) + (self.resolution,) * self.d
        if self.values.shape[1:] != expect:
            raise GridError(f"density flow values have shape {self.values.shape[1:]}, "
                            f"expected {expect}")
        if self.rep_ids is None:
            self.rep_ids = np.arange(self.values.shape[0])

    @property
    def dx(self) -> float:
        return 2 * self.L / self.resolution

    @property
    def cell(self) -> float:
        return self.dx ** self.d

    def grid(self, r: int, j: int) -> DensityGrid:
        return DensityGrid(self.d, self.L, self.resolution, self.values[r, j])

    def lr_norms(self, r: float) -> np.ndarray:
        """``||p(t)||_{L^r}`` per replication and time, ``(R, J+1)``."""
        axes = tuple(range(2, 2 + self.d))
        if r == np.inf:
            return self.values.max(axis=axes)
        return (np.sum(np.abs(self.values) ** r, axis=axes) * self.cell) ** (1.0 / r)

    @classmethod
    def from_function(cls, f: Callable, times, d: int, L: float,
                      resolution: int) -> "DensityFlow":
        """Deterministic flow from ``f(t, points)`` (points ``(*shape, d)``)."""
        probe = DensityGrid(d, L, resolution, np.zeros((resolution,) * d))
        pts = probe.points()
        vals = np.stack([np.asarray(f(t, pts), dtype=np.float64) for t in times])
        return cls(np.asarray(times), d, L, resolution, vals[None], np.array([0]))


def density_flow(flow: MeasureFlow, L: float, resolution: int,
                 bandwidth: float) -> DensityFlow:
    """KDE of every snapshot of every replication on the shared grid."""
    R, J1, n, d = flow.positions.shape
    pts = flow.positions.reshape(R * J1, n, d)
    vals = _kde_on_box(pts, d, L, resolution, bandwidth)
    vals = vals.reshape((R, J1) + (resolution,) * d)
    return DensityFlow(flow.times, d, L, resolution, vals, flow.rep_ids, bandwidth)


def density_grid(flow: MeasureFlow, t: float, L: float, resolution: int,
                 bandwidth: float, rep: int = 0) -> DensityGrid:
    """KDE of replication ``rep`` at snapshot time ``t``."""
    j = int(np.argmin(np.abs(flow.times - t)))
    if abs(flow.times[j] - t) > 1e-9 * max(1.0, abs(t)):
        raise InputError(f"time {t} is not a snapshot time")
    pts = flow.positions[rep:rep + 1, j]
    vals = _kde_on_box(pts, flow.d, L, resolution, bandwidth)[0]
    return DensityGrid(flow.d, L, resolution, vals)


@dataclass
class RegularityCurve:
    times: np.ndarray
    values: np.ndarray
    fit_c: float
    fit_gamma: float
    r: float
    q: float
    w: float
    bandwidth: float | None
    violations: float
    max_ratio: float

    @property
    def dominated(self) -> bool:
        """Every point lies below the envelope up to the 5% slack."""
        return self.max_ratio <= 1 + ENVELOPE_SLACK

    def envelope(self, t) -> np.ndarray:
        return self.fit_c * np.minimum(1.0, np.asarray(t)) ** (-self.fit_gamma)


def fit_envelope(times, values) -> tuple[float, float]:
    """Least-squares fit of ``log v = log c - gamma log(1 ^ t)``; ``gamma >= 0``."""
    t = np.asarray(times, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if t.size < 4:
        raise FitError(f"need at least 4 time points for the envelope fit, got {t.size}")
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise FitError("envelope fit needs finite positive values")
    x = np.log(np.minimum(1.0, t))
    y = np.log(v)
    if np.ptp(x) > 0:
        slope, icpt = np.polyfit(x, y, 1)
        gamma = -slope
    else:
        gamma = 0.0
    if gamma <= 0:
        gamma = 0.0
    icpt = float(np.mean(y + gamma * x))
    return float(math.exp(icpt)), float(gamma)


def lr_curve(runs: DensityFlow, r: float, q: float = 2.0, w: float = 0.0,
             dt: float | None = None, t_max: float = 1.0) -> RegularityCurve:
    """Monte-Carlo ``(E ||p(t)||^q)^(1/q)`` with the norm ``L^r`` (``w = 0``) or
    the Bessel potential norm of order ``w``, and its envelope fit on
    ``t in [10 dt, min(1, T)]``."""
    if not r >= 1:
        raise InputError("need r >= 1")
    times = runs.times
    dt = dt or float(times[1] - times[0])
    keep = (times >= 10 * dt - 1e-12) & (times <= min(t_max, times[-1]) + 1e-12)
    idx = np.nonzero(keep)[0]
    if idx.size < 4:
        raise FitError("fewer than 4 usable time points after burn-in")
    if w == 0:
        norms = runs.lr_norms(r)[:, idx]
    else:
        norms = np.array([[bessel_norm(runs.grid(k, j), w, r) for j in idx]
                          for k in range(runs.values.shape[0])])
    vals = np.mean(norms ** q, axis=0) ** (1.0 / q)
    c, gamma = fit_envelope(times[idx], vals)
    env = c * np.minimum(1.0, times[idx]) ** (-gamma)
    ratio = vals / env
    viol = float(np.mean(ratio > 1 + ENVELOPE_SLACK))
    return RegularityCurve(times[idx], vals, c, gamma, r, q, w, runs.bandwidth, viol,
                           float(ratio.max()))


@dataclass
class HolderFit:
    eta: float
    C: float
    degenerate: bool
    pairs: int


def time_holder_fit(runs: DensityFlow, r: float, t_left: float) -> HolderFit:
    """Fit ``E ||p(t) - p(s)||_{L^r} ~ C |t - s|^eta`` over pairs in ``[t_left, T]``."""
    if not t_left > 0:
        raise InputError("t_left must be positive")
    idx = np.nonzero(runs.times >= t_left - 1e-12)[0]
    if idx.size < 8:
        raise FitError("need at least 8 time points in [t_left, T]")
    axes = tuple(range(1, 1 + runs.d))
    gaps, dists = [], []
    for a in range(idx.size):
        for b in range(a + 1, idx.size):
            diff = runs.values[:, idx[b]] - runs.values[:, idx[a]]
            dist = (np.sum(np.abs(diff) ** r, axis=axes) * runs.cell) ** (1.0 / r)
            gaps.append(runs.times[idx[b]] - runs.times[idx[a]])
            dists.append(float(np.mean(dist)))
    gaps, dists = np.array(gaps), np.array(dists)
    if np.all(dists == 0):
        return HolderFit(math.nan, 0.0, True, gaps.size)
    ok = dists > 0
    slope, icpt = np.polyfit(np.log(gaps[ok]), np.log(dists[ok]), 1)
    return HolderFit(float(slope), float(math.exp(icpt)), False, int(ok.sum()))


@dataclass
class InterpolationSlack:
    xi: float
    r: float
    theta: float
    value: float
    bound: float

    @property
    def slack(self) -> float:
        return self.bound - self.value


def interpolation_check(grid: DensityGrid, xi: float, r: float) -> InterpolationSlack:
    """``||f||_xi <= ||f||_1^theta ||f||_r^(1-theta)`` with
    ``1/xi = theta + (1 - theta)/r``."""
    if not (1 <= xi < r):
        raise InputError("need 1 <= xi < r")
    theta = (1 / xi - 1 / r) / (1 - 1 / r)
    value = grid.lr_norm(xi)
    bound = grid.lr_norm(1) ** theta * grid.lr_norm(r) ** (1 - theta)
    return InterpolationSlack(xi, r, theta, value, bound)


@dataclass
class FlowDistanceReport:
    mode: str
    p: float
    xi: float
    t0: float | None
    value: float
    per_rep: np.ndarray = field(repr=False)
    grid: tuple = ()


def _resample(b: DensityFlow, times: np.ndarray) -> np.ndarray:
    if times[0] < b.times[0] - 1e-12 or times[-1] > b.times[-1] + 1e-12:
        raise GridError("time grids do not overlap; cannot resample")
    j = np.clip(np.searchsorted(b.times, times, side="right") - 1, 0, b.times.size - 2)
    f = (times - b.times[j]) / (b.times[j + 1] - b.times[j])
    f = f.reshape((1, -1) + (1,) * b.d)
    return (1 - f) * b.values[:, j] + f * b.values[:, j + 1]


def flow_distance(a: DensityFlow, b: DensityFlow, p: float, xi: float,
                  mode: str = "omega", t0: float | None = None) -> FlowDistanceReport:
    """Distance between two density flows, per paired replication, then averaged.

    ``omega``: ``(sum_j ||a_j - b_j||_xi^p (t_{j+1} - t_j))^(1/p)`` (left points,
    restricted to ``t_j >= t0`` when ``t0`` is given); ``sup_compact``:
    ``max_{t_j >= t0} ||a_j - b_j||_xi``.
    """
    if (a.d, a.L, a.resolution) != (b.d, b.L, b.resolution):
        raise GridError("flows live on different density grids")
    if a.values.shape[0] != b.values.shape[0]:
        raise GridError("flows have different numbers of replications")
    bv = b.values if np.array_equal(a.times, b.times) else _resample(b, a.times)
    axes = tuple(range(2, 2 + a.d))
    norms = (np.sum(np.abs(a.values - bv) ** xi, axis=axes) * a.cell) ** (1.0 / xi)
    times = a.times
    lo = -math.inf if t0 is None else t0 - 1e-12
    if mode == "omega":
        dts = np.diff(times)
        sel = times[:-1] >= lo
        per = (np.sum(norms[:, :-1][:, sel] ** p * dts[sel], axis=1)) ** (1.0 / p)
    elif mode == "sup_compact":
        if t0 is None:
            raise InputError("sup_compact mode needs t0")
        per = norms[:, times >= lo].max(axis=1)
    else:
        raise InputError(f"unknown distance mode {mode!r}")
    return FlowDistanceReport(mode, p, xi, t0, math.fsum(per) / per.size, per,
                              (a.d, a.L, a.resolution))


def write_curve_csv(curves: Sequence[RegularityCurve], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "mean_norm", "q", "r", "w", "fit_c", "fit_gamma"])
        for c in curves:
            for t, v in zip(c.times, c.values):
                w.writerow([repr(float(t)), repr(float(v)), c.q, c.r, c.w, repr(c.fit_c),
                            repr(c.fit_gamma)])


def write_distance_csv(reports: Sequence[FlowDistanceReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode", "p", "xi", "t0", "value"])
        for r in reports:
            w.writerow([r.mode, r.p, r.xi, "" if r.t0 is None else r.t0, repr(r.value)])
