"""Generator terms, characteristics and Monte-Carlo martingale diagnostics.

For a test function ``phi`` and a measure ``lam``:

* ``L phi = b^delta(x, lam^delta) . grad phi + 1/2 a : hess phi`` with
  ``a = sigma sigma^T + sigma_bar sigma_bar^T``,
* ``R phi = sigma_bar^T grad phi`` (m components), ``U phi = sigma^T grad phi``,
* ``A[phi] = lam[L phi]``, ``Q[phi, psi] = lam[R phi] . lam[R psi]`` and
  ``C[phi, psi] = lam[U phi . U psi]``.

The residual ``M_t = Lam_t - Lam_0 - int A ds`` of a particle flow has
quadratic variation ``int (Q + C / n) ds``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from mvlab.coeffs import CoefficientSet
from mvlab.errors import InputError
from mvlab.measures import EmpiricalMeasure, GridMeasure, as_batch
from mvlab.mollify import MollifierSpec, _taps, smooth_drift, smoothed_drift_at
from mvlab.particles import MeasureFlow, ParticleEnsemble, SimConfig, simulate
from mvlab.spectral.testfunctions import TestFunction

Z_FLAG = 3.0


def _atoms_of(lam):
    return lam.atoms if isinstance(lam, EmpiricalMeasure) else lam.nodes().reshape(
        lam.lo.shape[0], -1, lam.d)


def _smoothed_grid(gm: GridMeasure, spec: MollifierSpec) -> GridMeasure:
    from mvlab import kernels
    taps = _taps(spec, gm.dx)
    v = gm.values[..., None]
    conv = kernels.conv_same_1d(v, taps) if gm.d == 1 else kernels.conv_same_2d(v, taps)
    return GridMeasure(gm.lo, gm.dx, conv[..., 0], gm.extent)


def drift_at(coeffs: CoefficientSet, delta: float | None, t: float, lam, x,
             mode: str = "grid") -> np.ndarray:
    """``b^delta_t(x, lam^delta)`` (``delta`` 0 or ``None``: the raw drift)."""
    x = as_batch(x, coeffs.d)
    drift = coeffs.drift
    if drift.is_zero:
        return np.zeros(x.shape)
    if not delta:
        return drift(t, x, lam)
    spec = MollifierSpec(coeffs.d, delta)
    if isinstance(lam, GridMeasure):
        return smooth_drift(drift, spec, t, x, _smoothed_grid(lam, spec))
    if lam.weights is not None:
        from mvlab.mollify import SmoothedEmpirical
        sm = SmoothedEmpirical(lam.atoms, spec)
        sm.weights = lam.weights
        return smooth_drift(drift, spec, t, x, sm)
    return smoothed_drift_at(drift, t, lam.atoms, x, spec, mode=mode)


def _terms_from(coeffs, t, x, lam, bvals, phi):
    g = phi.grad(x)
    h = phi.hess(x)
    if coeffs.const_sigma and coeffs.const_sigma_bar:
        s, sb = coeffs.sigma, coeffs.sigma_bar
        a = s @ s.T + sb @ sb.T
        if coeffs.d == 1:
            gen = bvals[..., 0] * g[..., 0] + 0.5 * a[0, 0] * h[..., 0, 0]
        else:
            gen = np.sum(bvals * g, axis=-1) + 0.5 * np.einsum("ij,rqij->rq", a, h)
        return gen, g @ sb, g @ s
    a = coeffs.diffusion_matrix(t, x, lam)
    gen = np.sum(bvals * g, axis=-1) + 0.5 * np.sum(a * h, axis=(-2, -1))
    common = np.einsum("rqdm,rqd->rqm", coeffs.sigma_bar_at(t, x, lam), g)
    own = np.einsum("rqde,rqd->rqe", coeffs.sigma_at(t, x, lam), g)
    return gen, common, own


def generator_terms(coeffs: CoefficientSet, delta: float | None, t: float, lam,
                    phi: TestFunction, x, mode: str = "grid", drift_scale: float = 1.0):
    """``(L phi, R phi, U phi)`` at points ``x`` (batched ``(R, q, d)``).

    ``drift_scale`` multiplies the drift (used to build deliberately wrong
    compensators for power checks).
    """
    xb = as_batch(x, coeffs.d)
    b = drift_scale * drift_at(coeffs, delta, t, lam, xb, mode)
    return _terms_from(coeffs, t, xb, lam, b, phi)


@dataclass(frozen=True)
class CharacteristicsSample:
    a_val: np.ndarray
    q_val: np.ndarray
    c_val: np.ndarray
    t: float
    phi_id: str
    psi_id: str
    measure: str


def _integrate(lam, vals):
    if isinstance(lam, GridMeasure):
        w = lam.values.reshape(lam.values.shape[0], -1) * lam.dx ** lam.d
        return np.einsum("rq,rq...->r...", w, vals)
    return lam.integrate(vals)


def characteristics(coeffs: CoefficientSet, delta: float | None, t: float, lam,
                    phi: TestFunction, psi: TestFunction | None = None,
                    mode: str = "grid") -> CharacteristicsSample:
    """``A[phi]``, ``Q[phi, psi]`` and ``C[phi, psi]`` per batch member."""
    psi = phi if psi is None else psi
    x = _atoms_of(lam)
    b = drift_at(coeffs, delta, t, lam, x, mode)
    Lp, Rp, Up = _terms_from(coeffs, t, x, lam, b, phi)
    if psi is phi:
        Rq, Uq = Rp, Up
    else:
        _, Rq, Uq = _terms_from(coeffs, t, x, lam, b, psi)
    a_val = _integrate(lam, Lp)
    q_val = np.sum(_integrate(lam, Rp) * _integrate(lam, Rq), axis=-1)
    c_val = _integrate(lam, np.sum(Up * Uq, axis=-1))
    kind = "grid" if isinstance(lam, GridMeasure) else f"atomic(n={lam.n})"
    return CharacteristicsSample(a_val, q_val, c_val, t, phi.name, psi.name, kind)


@dataclass
class ResidualSeries:
    """Residuals of one test function for an ensemble of replications.

    Arrays are ``(R, J+1)``: ``lam`` holds ``Lam_t[phi]``, ``values`` the
    residual ``M_t``, ``predicted_qv`` the trapezoid integral of
    ``Q + C / n`` and ``realized_qv`` the running sum of squared increments.
    """

    times: np.ndarray
    rep_ids: np.ndarray
    phi_id: str
    n: int
    lam: np.ndarray
    values: np.ndarray
    predicted_qv: np.ndarray
    realized_qv: np.ndarray

    def index(self, t: float) -> int:
        j = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[j] - t) > 1e-9 * max(1.0, abs(t)):
            raise InputError(f"time {t} is not on the residual grid")
        return j


class ResidualAccumulator:
    """Builds :class:`ResidualSeries` from states visited in time order.

    Usable as a :func:`mvlab.particles.simulate` observer, so long ensembles
    never need their full paths in memory.
    """

    def __init__(self, coeffs: CoefficientSet, delta: float | None,
                 phis: Sequence[TestFunction], rep_ids, steps: int, dt: float, n: int,
                 mode: str = "grid", drift_scale: float = 1.0):
        self.coeffs, self.delta, self.phis = coeffs, delta, list(phis)
        self.rep_ids = np.asarray(rep_ids)
        self._row = {int(r): i for i, r in enumerate(self.rep_ids)}
        self.dt, self.n, self.steps = dt, n, steps
        self.mode, self.drift_scale = mode, drift_scale
        shape = (len(self.phis), self.rep_ids.size, steps + 1)
        self.lam = np.zeros(shape)
        self.gen_mean = np.zeros(shape)
        self.qv_rate = np.zeros(shape)

    def observe(self, x: np.ndarray, t: float, step: int, rep_ids) -> None:
        rows = np.array([self._row[int(r)] for r in np.atleast_1d(rep_ids)])
        mu = EmpiricalMeasure(x)
        b = self.drift_scale * drift_at(self.coeffs, self.delta, t, mu, x, self.mode)
        for k, phi in enumerate(self.phis):
            gen, common, own = _terms_from(self.coeffs, t, x, mu, b, phi)
            self.lam[k, rows, step] = phi(x).mean(axis=1)
            self.gen_mean[k, rows, step] = gen.mean(axis=1)
            q = np.sum(common.mean(axis=1) ** 2, axis=-1)
            c = np.sum(own * own, axis=-1).mean(axis=1)
            self.qv_rate[k, rows, step] = q + c / self.n

    def __call__(self, ens: ParticleEnsemble) -> None:
        self.observe(ens.positions, ens.time, ens.step, ens.rep_ids)

    def series(self) -> list[ResidualSeries]:
        times = np.arange(self.steps + 1) * self.dt
        out = []
        for k, phi in enumerate(self.phis):
            lam, gen = self.lam[k], self.gen_mean[k]
            comp = np.zeros_like(lam)
            comp[:, 1:] = np.cumsum(gen[:, :-1], axis=1) * self.dt
            resid = lam - lam[:, :1] - comp
            pq = np.zeros_like(lam)
            rate = self.qv_rate[k]
            pq[:, 1:] = np.cumsum(0.5 * (rate[:, 1:] + rate[:, :-1]), axis=1) * self.dt
            rq = np.zeros_like(lam)
            rq[:, 1:] = np.cumsum(np.diff(resid, axis=1) ** 2, axis=1)
            out.append(ResidualSeries(times, self.rep_ids, phi.name, self.n, lam, resid, pq, rq))
        return out


def residual_series(flow: MeasureFlow, coeffs: CoefficientSet, delta: float | None,
                    phis: Sequence[TestFunction] | TestFunction, mode: str = "grid",
                    drift_scale: float = 1.0) -> list[ResidualSeries]:
    """Residuals from a stored flow (use stride 1)."""
    phis = [phis] if isinstance(phis, TestFunction) else list(phis)
    times = flow.times
    steps = times.size - 1
    dt = float(times[1] - times[0]) if steps else 1.0
    if steps and not np.allclose(np.diff(times), dt, rtol=1e-9, atol=0):
        raise InputError("residuals need a uniform snapshot grid")
    acc = ResidualAccumulator(coeffs, delta, phis, flow.rep_ids, steps, dt, flow.n, mode,
                              drift_scale)
    for j in range(steps + 1):
        acc.observe(flow.positions[:, j], float(times[j]), j, flow.rep_ids)
    return acc.series()


def simulate_residuals(cfg: SimConfig, phis: Sequence[TestFunction],
                       rep_ids=None, drift_scale: float = 1.0, keep_stride: int | None = None
                       ) -> tuple[list[ResidualSeries], MeasureFlow]:
    """Simulate and accumulate residuals on the fly (no stored full paths)."""
    rep_ids = np.arange(cfg.replications) if rep_ids is None else np.atleast_1d(rep_ids)
    acc = ResidualAccumulator(cfg.coeffs, cfg.delta, phis, rep_ids, cfg.steps, cfg.dt, cfg.n,
                              cfg.drift_mode, drift_scale)
    flow, _ = simulate(cfg, rep_ids=rep_ids, stride=keep_stride or cfg.steps, observer=acc)
    return acc.series(), flow


@dataclass
class TestReport:
    __test__ = False

    test_name: str
    phi_id: str
    s: float
    t: float
    mean: float
    se: float
    z: float
    passed: bool
    extra: dict = field(default_factory=dict)

    @property
    def flagged(self) -> bool:
        return not self.passed


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    v = np.asarray(v, dtype=np.float64)
    mean = math.fsum(v) / v.size
    if v.size < 2:
        return mean, math.inf
    var = math.fsum((v - mean) ** 2) / (v.size - 1)
    return mean, math.sqrt(var / v.size)


def tanh_functional(series: ResidualSeries) -> Callable[[int], np.ndarray]:
    """``g = tanh(Lam_s[phi])``, bounded and determined by the flow up to ``s``."""
    return lambda js: np.tanh(series.lam[:, js])


def martingale_test(series: ResidualSeries, s: float, t: float, g=None,
                    name: str = "martingale") -> TestReport:
    """z-statistic of ``(M_t - M_s) g`` over replications; flags ``|z| > 3``.

    ``g`` is ``None`` (zero), an array of one value per replication, or a
    callable of the index of ``s``.
    """
    js, jt = series.index(s), series.index(t)
    if not js < jt:
        raise InputError("need s < t")
    if g is None:
        gv = np.zeros(series.rep_ids.size)
    elif callable(g):
        gv = np.asarray(g(js), dtype=np.float64)
    else:
        gv = np.asarray(g, dtype=np.float64)
    prod = (series.values[:, jt] - series.values[:, js]) * gv
    mean, se = _mean_se(prod)
    if mean == 0.0:
        z = 0.0
    else:
        z = mean / se if se > 0 else math.copysign(math.inf, mean)
    return TestReport(name, series.phi_id, float(series.times[js]), float(series.times[jt]),
                      mean, se, z, abs(z) <= Z_FLAG)


def qv_test(series: ResidualSeries, n: int | None = None, tol: float = 0.10,
            t: float | None = None) -> TestReport:
    """Ensemble-mean realized QV against the predicted integral at time ``t``."""
    jt = series.realized_qv.shape[1] - 1 if t is None else series.index(t)
    real, se = _mean_se(series.realized_qv[:, jt])
    pred, _ = _mean_se(series.predicted_qv[:, jt])
    if pred == 0.0:
        rel = 0.0 if real == 0.0 else math.inf
    else:
        rel = abs(real - pred) / abs(pred)
    z = (real - pred) / se if se > 0 else 0.0
    return TestReport("qv", series.phi_id, 0.0, float(series.times[jt]), real, se, z,
                      rel <= tol, {"predicted": pred, "relative_error": rel,
                                   "n": n or series.n})


def loglog_slope(ns: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of ``log value`` against ``log n``."""
    return float(np.polyfit(np.log(np.asarray(ns, dtype=np.float64)),
                            np.log(np.asarray(values, dtype=np.float64)), 1)[0])


def polarized_covariation(qv_sum: np.ndarray, qv_diff: np.ndarray) -> np.ndarray:
    """``<M[phi], M[psi]>`` from the QVs of ``phi + psi`` and ``phi - psi``."""
    return 0.25 * (np.asarray(qv_sum) - np.asarray(qv_diff))


def residual_bound(coeffs: CoefficientSet, T: float, seminorm2: float) -> float:
    """``(2 + T c) ||phi||_2^*`` with ``c = ||b|| + (||sigma||^2 + ||sigma_bar||^2)/2``."""
    return (2.0 + T * coeffs.c_bound) * seminorm2


REPORT_COLUMNS = ("test_name", "phi_id", "s", "t", "mean", "se", "z", "pass")


def write_report_csv(reports: Sequence[TestReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            w.writerow([r.test_name, r.phi_id, repr(r.s), repr(r.t), repr(r.mean),
                        repr(r.se), repr(r.z), int(r.passed)])
