"""Coefficient triples (b, sigma, sigma_bar), the two drift families, and
sampled checks of boundedness, ellipticity and Hoelder regularity."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import fft as sfft

from mvlab.errors import DensityRequiredError, InputError, UnsupportedDimensionError
from mvlab.measures import EmpiricalMeasure, GridMeasure, as_batch

CONVOLUTION = "convolution"
NEMYTSKII = "nemytskii"
CUSTOM = "custom"
ZERO = "zero"


def _as_vector_field(v, prefix: tuple[int, ...], d: int) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape == prefix:
        if d != 1:
            raise InputError(f"drift returned scalars but d = {d}")
        v = v[..., None]
    return np.broadcast_to(v, prefix + (d,))


@dataclass(frozen=True)
class DriftSpec:
    """A drift ``b_t(x, mu)`` with a declared sup bound.

    ``func`` depends on ``variant``: the kernel ``k(t, y)`` for convolution
    drifts, ``B(t, x, rho)`` for Nemytskii drifts, ``b(t, y, lam)`` for custom
    ones.  All receive and return batched arrays (``y`` is ``(R, Q, d)``).
    """

    variant: str
    func: Callable | None
    sup_bound: float
    d: int = 1
    description: str = ""
    constant: tuple | None = None

    def __post_init__(self):
        if self.variant not in (CONVOLUTION, NEMYTSKII, CUSTOM, ZERO):
            raise InputError(f"unknown drift variant {self.variant!r}")
        if not (math.isfinite(self.sup_bound) and self.sup_bound >= 0):
            raise InputError("drift sup bound must be finite and nonnegative")

    @property
    def is_zero(self) -> bool:
        return self.variant == ZERO

    def __call__(self, t: float, y, lam) -> np.ndarray:
        y = as_batch(y, self.d)
        prefix = y.shape[:2]
        if self.variant == ZERO:
            return np.zeros(y.shape)
        if self.variant == NEMYTSKII:
            rho = lam.density(y)
            return _as_vector_field(self.func(t, y, rho), prefix, self.d)
        if self.variant == CUSTOM:
            return _as_vector_field(self.func(t, y, lam), prefix, self.d)
        return self._convolve(t, y, lam)

    def _convolve(self, t, y, lam):
        R, Q, d = y.shape
        if isinstance(lam, GridMeasure):
            nodes = lam.nodes().reshape(lam.lo.shape[0], -1, d)
            w = lam.values.reshape(lam.lo.shape[0], -1) * lam.dx ** d
            return self._atom_sum(t, y, nodes, w)
        spec = getattr(lam, "spec", None)
        atoms = lam.atoms
        n = atoms.shape[1]
        w = np.full((atoms.shape[0], n), 1.0 / n) if lam.weights is None else \
            np.broadcast_to(lam.weights, (atoms.shape[0], n))
        if spec is None:
            return self._atom_sum(t, y, atoms, w)
        from mvlab.mollify import ball_quadrature
        u, qw = ball_quadrature(d, 16)
        shifted = (atoms[:, :, None, :] + spec.delta * u[None, None]).reshape(atoms.shape[0], -1, d)
        sw = (w[:, :, None] * qw[None, None]).reshape(atoms.shape[0], -1)
        return self._atom_sum(t, y, shifted, sw)

    def _atom_sum(self, t, y, atoms, w):
        R, Q, d = y.shape
        atoms = np.broadcast_to(atoms, (R,) + atoms.shape[1:])
        w = np.broadcast_to(w, (R, atoms.shape[1]))
        out = np.zeros((R, Q, d))
        step = max(1, (1 << 21) // max(1, R * atoms.shape[1]))
        for a in range(0, Q, step):
            diff = y[:, a:a + step, None, :] - atoms[:, None, :, :]
            kv = _as_vector_field(self.func(t, diff), diff.shape[:3], d)
            out[:, a:a + step] = np.einsum("rqnd,rn->rqd", kv, w)
        return out

    def on_grid(self, t: float, gm: GridMeasure) -> np.ndarray:
        """Drift values ``b_t(y, lam)`` at every node of ``gm`` (``lam`` = ``gm``)."""
        shape = gm.values.shape
        R, d = shape[0], self.d
        if self.variant == ZERO:
            return np.zeros(shape + (d,))
        nodes = gm.nodes()
        if self.variant == NEMYTSKII:
            return _as_vector_field(self.func(t, nodes, gm.values), shape, d).copy()
        if self.variant == CUSTOM:
            flat = nodes.reshape(R, -1, d)
            return self(t, flat, gm).reshape(shape + (d,))
        return self._grid_fft(t, gm)

    def _grid_fft(self, t, gm):
        R, d = gm.values.shape[0], self.d
        out = np.zeros(gm.values.shape + (d,))
        cell = gm.dx ** d
        for r in range(R):
            ext = tuple(int(e) for e in gm.extent[r])
            rho = gm.values[(r,) + tuple(slice(0, e) for e in ext)]
            axes = [np.arange(-(e - 1), e) * gm.dx for e in ext]
            offs = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
            kv = _as_vector_field(self.func(t, offs[None]), (1,) + offs.shape[:-1], d)[0]
            region = tuple(slice(e - 1, 2 * e - 1) for e in ext)
            for c in range(d):
                full = sfft.irfftn(sfft.rfftn(kv[..., c], [2 * e - 1 + e - 1 for e in ext])
                                   * sfft.rfftn(rho, [2 * e - 1 + e - 1 for e in ext]),
                                   [2 * e - 1 + e - 1 for e in ext])
                out[(r,) + tuple(slice(0, e) for e in ext) + (c,)] = full[region] * cell
        return out


def make_convolution_drift(kernel: Callable, sup_bound: float, d: int = 1,
                           description: str = "") -> DriftSpec:
    """``b_t(x, mu) = (mu * k_t)(x)`` for a bounded kernel ``k(t, y)``."""
    return DriftSpec(CONVOLUTION, kernel, float(sup_bound), d,
                     description or "convolution drift (mu * k_t)(x)")


def make_nemytskii_drift(B: Callable, sup_bound: float, d: int = 1,
                         description: str = "") -> DriftSpec:
    """``b_t(x, mu) = B_t(x, f_mu(x))`` with ``f_mu`` the density of ``mu``."""
    return DriftSpec(NEMYTSKII, B, float(sup_bound), d,
                     description or "Nemytskii drift B_t(x, f_mu(x))")


def make_custom_drift(func: Callable, sup_bound: float, d: int = 1,
                      description: str = "") -> DriftSpec:
    return DriftSpec(CUSTOM, func, float(sup_bound), d, description or "custom drift")


def zero_drift(d: int = 1) -> DriftSpec:
    return DriftSpec(ZERO, None, 0.0, d, "zero drift")


def constant_drift(value, d: int = 1) -> DriftSpec:
    v = np.broadcast_to(np.asarray(value, dtype=np.float64), (d,)).copy()
    # smoothing leaves a constant unchanged; ``constant`` lets callers skip it
    return DriftSpec(CUSTOM, lambda t, y, lam: np.broadcast_to(v, y.shape),
                     float(np.linalg.norm(v)), d, f"constant drift {v.tolist()}",
                     tuple(float(a) for a in v))


def _frob_sup(m) -> float:
    return float(np.linalg.norm(np.asarray(m, dtype=np.float64)))


@dataclass
class CoefficientSet:
    """The triple ``(b, sigma, sigma_bar)`` with declared constants.

    ``sigma`` is a ``(d, d)`` matrix or a callable ``(t, x, mu) -> (R, n, d, d)``;
    ``sigma_bar`` likewise with ``m`` columns.  Norms are Frobenius norms.
    ``test_mode`` allows a degenerate ``sigma`` (the ellipticity constant is
    then not enforced).
    """

    drift: DriftSpec
    sigma: np.ndarray | Callable
    sigma_bar: np.ndarray | Callable
    d: int = 1
    m: int = 1
    b_sup: float | None = None
    kappa: float = 1.0
    beta: float = 1.0
    hoelder_C: float = 1.0
    sigma_sup: float | None = None
    sigma_bar_sup: float | None = None
    test_mode: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.drift.d != self.d:
            raise InputError("drift dimension does not match d")
        if not callable(self.sigma):
            self.sigma = np.asarray(self.sigma, dtype=np.float64).reshape(self.d, self.d)
            if self.sigma_sup is None:
                self.sigma_sup = _frob_sup(self.sigma)
        if not callable(self.sigma_bar):
            self.sigma_bar = np.asarray(self.sigma_bar, dtype=np.float64).reshape(self.d, self.m)
            if self.sigma_bar_sup is None:
                self.sigma_bar_sup = _frob_sup(self.sigma_bar)
        if self.sigma_sup is None or self.sigma_bar_sup is None:
            raise InputError("callable diffusions need declared sigma_sup / sigma_bar_sup")
        if self.b_sup is None:
            self.b_sup = self.drift.sup_bound
        if self.b_sup < 0 or (self.b_sup == 0 and not self.drift.is_zero):
            raise InputError("declared b_sup must be positive")
        if not (0 < self.beta <= 1):
            raise InputError("beta must lie in (0, 1]")
        if self.hoelder_C <= 0:
            raise InputError("hoelder_C must be positive")
        if self.kappa <= 0 and not self.test_mode:
            raise InputError("kappa must be positive (set test_mode to bypass)")
        if not self.test_mode and not callable(self.sigma):
            lam_min = float(np.linalg.eigvalsh(self.sigma @ self.sigma.T).min())
            if lam_min < self.kappa * (1 - 1e-12):
                raise InputError(f"constant sigma violates ellipticity: "
                                 f"min eigenvalue {lam_min} < kappa {self.kappa}")

    @property
    def const_sigma(self) -> bool:
        return not callable(self.sigma)

    @property
    def const_sigma_bar(self) -> bool:
        return not callable(self.sigma_bar)

    def sigma_at(self, t, x, mu) -> np.ndarray:
        x = as_batch(x, self.d)
        if self.const_sigma:
            return np.broadcast_to(self.sigma, x.shape[:2] + (self.d, self.d))
        return np.asarray(self.sigma(t, x, mu), dtype=np.float64)

    def sigma_bar_at(self, t, x, mu) -> np.ndarray:
        x = as_batch(x, self.d)
        if self.const_sigma_bar:
            return np.broadcast_to(self.sigma_bar, x.shape[:2] + (self.d, self.m))
        return np.asarray(self.sigma_bar(t, x, mu), dtype=np.float64)

    def diffusion_matrix(self, t, x, mu) -> np.ndarray:
        """``a = sigma sigma^T + sigma_bar sigma_bar^T`` at each point, ``(R, n, d, d)``."""
        s = self.sigma_at(t, x, mu)
        sb = self.sigma_bar_at(t, x, mu)
        return s @ np.swapaxes(s, -1, -2) + sb @ np.swapaxes(sb, -1, -2)

    @property
    def c_bound(self) -> float:
        """``||b|| + (||sigma||^2 + ||sigma_bar||^2) / 2``."""
        return self.b_sup + 0.5 * (self.sigma_sup ** 2 + self.sigma_bar_sup ** 2)


def w1_distance_1d(mu, nu) -> float:
    """Exact Kantorovich-Rubinstein distance between two atomic measures on R."""
    a, wa = _atoms_1d(mu)
    b, wb = _atoms_1d(nu)
    if wa is None and wb is None and a.size == b.size:
        return float(np.mean(np.abs(np.sort(a) - np.sort(b))))
    wa = np.full(a.size, 1.0 / a.size) if wa is None else wa
    wb = np.full(b.size, 1.0 / b.size) if wb is None else wb
    z = np.concatenate([a, b])
    order = np.argsort(z, kind="stable")
    z = z[order]
    jumps = np.concatenate([wa, -wb])[order]
    cdf_gap = np.cumsum(jumps)[:-1]
    return float(np.sum(np.abs(cdf_gap) * np.diff(z)))


def _atoms_1d(mu):
    if isinstance(mu, EmpiricalMeasure):
        if mu.d != 1 or mu.batch_size != 1:
            raise UnsupportedDimensionError("W1 is computed exactly only in d = 1")
        return mu.atoms[0, :, 0], mu.weights
    a = np.asarray(mu, dtype=np.float64)
    if a.ndim == 2:
        if a.shape[1] != 1:
            raise UnsupportedDimensionError("W1 is computed exactly only in d = 1")
        a = a[:, 0]
    if a.ndim != 1 or a.size == 0:
        raise InputError("expected a non-empty list of atoms on the line")
    return a, None


@dataclass
class SamplePlan:
    """Sample tuples for :func:`verify_assumptions`.

    ``mu``/``mu2`` are optional sequences of atomic measures (``None`` means the
    coefficients are evaluated against a fixed point mass and W1 = 0).
    """

    t: np.ndarray
    x: np.ndarray
    x2: np.ndarray
    z: np.ndarray | None = None
    t2: np.ndarray | None = None
    mu: Sequence | None = None
    mu2: Sequence | None = None
    smoothing: float = 0.5

    def __post_init__(self):
        self.t = np.atleast_1d(np.asarray(self.t, dtype=np.float64))
        self.x = np.asarray(self.x, dtype=np.float64).reshape(self.t.size, -1)
        self.x2 = np.asarray(self.x2, dtype=np.float64).reshape(self.t.size, -1)
        if self.t.size == 0:
            raise InputError("sample plan is empty")
        if self.t2 is None:
            self.t2 = self.t.copy()
        if self.z is not None:
            self.z = np.asarray(self.z, dtype=np.float64).reshape(self.t.size, -1)


@dataclass
class AssumptionReport:
    observed_kappa: float
    kappa_ok: bool
    sigma_ratio: float
    sigma_bar_ratio: float
    hoelder_ok: bool
    observed_b_sup: float
    b_ok: bool

    @property
    def passed(self) -> bool:
        return self.kappa_ok and self.hoelder_ok and self.b_ok


def _measure(plan_mu, i, d):
    if plan_mu is None:
        return EmpiricalMeasure(np.zeros((1, 1, d)))
    m = plan_mu[i]
    return m if isinstance(m, EmpiricalMeasure) else EmpiricalMeasure(as_batch(m, d))


def verify_assumptions(coeffs: CoefficientSet, plan: SamplePlan) -> AssumptionReport:
    """Sampled diagnostics for boundedness, ellipticity and Hoelder regularity.

    The report is a diagnostic, not a certificate.
    """
    from mvlab.mollify import MollifierSpec, SmoothedEmpirical

    d = coeffs.d
    if plan.x.shape[1] != d:
        raise InputError("sample plan dimension does not match coefficients")
    if d >= 2 and (plan.mu is not None or plan.mu2 is not None):
        raise UnsupportedDimensionError("W1 exact only in d=1; measure pairs need d = 1")
    beta = coeffs.beta
    kap = math.inf
    rs = rsb = 0.0
    bmax = 0.0
    for i in range(plan.t.size):
        t, t2 = plan.t[i], plan.t2[i]
        x = plan.x[i].reshape(1, 1, d)
        x2 = plan.x2[i].reshape(1, 1, d)
        mu, mu2 = _measure(plan.mu, i, d), _measure(plan.mu2, i, d)
        s = coeffs.sigma_at(t, x, mu)[0, 0]
        aa = s @ s.T
        if plan.z is not None:
            z = plan.z[i]
            nz = float(z @ z)
            if nz > 0:
                kap = min(kap, float(z @ aa @ z) / nz)
        else:
            kap = min(kap, float(np.linalg.eigvalsh(aa).min()))
        w = w1_distance_1d(mu, mu2) if plan.mu is not None else 0.0
        dx = float(np.linalg.norm(plan.x[i] - plan.x2[i]))
        den = dx ** beta + w ** beta
        if den > 0:
            s2 = coeffs.sigma_at(t, x2, mu2)[0, 0]
            rs = max(rs, float(np.linalg.norm(s - s2)) / den)
        den_b = abs(t - t2) ** beta + den
        if den_b > 0:
            sb = coeffs.sigma_bar_at(t, x, mu)[0, 0]
            sb2 = coeffs.sigma_bar_at(t2, x2, mu2)[0, 0]
            rsb = max(rsb, float(np.linalg.norm(sb - sb2)) / den_b)
        try:
            bv = coeffs.drift(t, x, mu)
        except DensityRequiredError:
            bv = coeffs.drift(t, x, SmoothedEmpirical(mu.atoms, MollifierSpec(d, plan.smoothing)))
        bmax = max(bmax, float(np.linalg.norm(bv[0, 0])))
    # test_mode only skips the construction-time check; the report stays honest
    kappa_ok = coeffs.kappa > 0 and kap >= coeffs.kappa * (1 - 1e-12)
    hoelder_ok = rs <= coeffs.hoelder_C and rsb <= coeffs.hoelder_C
    return AssumptionReport(kap, kappa_ok, rs, rsb, hoelder_ok, bmax, bmax <= coeffs.b_sup)
