import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mvlab.coeffs import CoefficientSet, constant_drift, zero_drift
from mvlab.errors import DensityRequiredError, InputError
from mvlab.lab.registry import make_drift
from mvlab.measures import EmpiricalMeasure, GridMeasure
from mvlab.mgdiag import (
    REPORT_COLUMNS,
    characteristics,
    generator_terms,
    loglog_slope,
    martingale_test,
    polarized_covariation,
    qv_test,
    residual_bound,
    residual_series,
    simulate_residuals,
    tanh_functional,
    write_report_csv,
)
from mvlab.particles import GaussianLaw, SimConfig, UniformLaw, simulate
from mvlab.spectral import TestFunction, compact_bump, gaussian_bump, hermite, seminorm_star


def _plateau(inner=2.0, outer=3.0):
    """1 on |x| <= inner, 0 beyond outer, smooth in between."""
    def f(s):
        return np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)

    def value(x):
        r = np.abs(x[..., 0])
        a, b = f(outer - r), f(r - inner)
        return a / (a + b)

    def grad(x):
        h = 1e-5
        e = np.array([h])
        return ((value(x + e) - value(x - e)) / (2 * h))[..., None]

    def hess(x):
        h = 1e-4
        e = np.array([h])
        return ((value(x + e) - 2 * value(x) + value(x - e)) / h ** 2)[..., None, None]

    return TestFunction("plateau", 1, value, grad, hess, outer)


def test_generator_examples():
    co = CoefficientSet(zero_drift(), 1.0, 0.0)
    phi = gaussian_bump(0.0, 1.0)
    lam = EmpiricalMeasure(np.zeros((1, 1, 1)))
    L, R, U = generator_terms(co, 0.0, 0.0, lam, phi, [[0.0]])
    assert L[0, 0] == -0.5
    xs = np.linspace(-2, 2, 9)[:, None]
    _, R, _ = generator_terms(co, 0.0, 0.0, lam, phi, xs)
    assert np.all(R == 0.0)
    co2 = CoefficientSet(zero_drift(), 2.0, 0.0, kappa=4.0)
    _, _, U = generator_terms(co2, 0.0, 0.0, lam, phi, xs)
    np.testing.assert_array_equal(U[0], 2.0 * phi.grad(xs))


def test_unsmoothed_nemytskii_needs_density():
    co = CoefficientSet(make_drift("nemytskii_arctan", 1), 1.0, 0.0)
    lam = EmpiricalMeasure(np.zeros((1, 3, 1)))
    with pytest.raises(DensityRequiredError):
        generator_terms(co, 0.0, 0.0, lam, hermite(1), [[0.0]])


def _sig(t, x, mu):
    return (1.0 + 0.5 * np.tanh(x[..., 0]))[..., None, None]


def _sigbar(t, x, mu):
    return np.stack([0.3 * np.cos(x[..., 0]), 0.2 * np.ones(x.shape[:-1])], axis=-1)[..., None, :]


def _oracle(atoms, phi, psi, kernel):
    """Brute-force characteristics with plain loops (unsmoothed convolution drift)."""
    n = len(atoms)
    a_sum = 0.0
    rp = [0.0, 0.0]
    rq = [0.0, 0.0]
    c_sum = 0.0
    for i in range(n):
        x = np.array([[atoms[i]]])
        b = 0.0
        for j in range(n):
            b += float(kernel(0.0, np.array([[[atoms[i] - atoms[j]]]]))[0, 0, 0])
        b /= n
        s = float(_sig(0.0, x[None], None)[0, 0, 0, 0])
        sb = _sigbar(0.0, x[None], None)[0, 0, 0]
        a = s * s + float(sb @ sb)
        g1 = float(phi.grad(x)[0, 0])
        h1 = float(phi.hess(x)[0, 0, 0])
        g2 = float(psi.grad(x)[0, 0])
        a_sum += b * g1 + 0.5 * a * h1
        for c in range(2):
            rp[c] += sb[c] * g1
            rq[c] += sb[c] * g2
        c_sum += (s * g1) * (s * g2)
    a_sum /= n
    c_sum /= n
    q_sum = sum((rp[c] / n) * (rq[c] / n) for c in range(2))
    return a_sum, q_sum, c_sum


def test_atomic_characteristics_match_brute_force(rng):
    drift = make_drift("conv_gaussian", 1, {"strength": 1.5, "length": 0.8})
    co = CoefficientSet(drift, _sig, _sigbar, m=2, sigma_sup=1.5, sigma_bar_sup=0.5,
                        kappa=0.25)
    phi, psi = gaussian_bump(0.2, 0.9), hermite(3)
    for _ in range(10):
        atoms = rng.normal(size=5)
        lam = EmpiricalMeasure(atoms[None, :, None])
        got = characteristics(co, None, 0.0, lam, phi, psi)
        ref3 = _oracle(atoms, phi, psi, drift.func)
        for v, ref in zip((got.a_val[0], got.q_val[0], got.c_val[0]), ref3):
            assert abs(v - ref) <= 1e-14 * max(1.0, abs(ref))


def test_q_vanishes_without_common_noise(rng):
    co = CoefficientSet(make_drift("conv_sign", 1), 1.0, 0.0)
    lam = EmpiricalMeasure(rng.normal(size=(2, 6, 1)))
    s = characteristics(co, 0.3, 0.0, lam, gaussian_bump(0.0, 1.0))
    assert np.all(s.q_val == 0.0)


@given(st.lists(st.floats(-3, 3), min_size=1, max_size=8))
def test_q_and_c_symmetric_and_nonnegative(xs):
    co = CoefficientSet(make_drift("conv_gaussian", 1), 1.2, [[0.4, -0.7]], m=2, kappa=1.44)
    lam = EmpiricalMeasure(np.array(xs)[None, :, None])
    phi, psi = gaussian_bump(0.5, 0.7), hermite(2)
    a = characteristics(co, None, 0.0, lam, phi, psi)
    b = characteristics(co, None, 0.0, lam, psi, phi)
    assert a.q_val[0] == b.q_val[0] and a.c_val[0] == b.c_val[0]
    d = characteristics(co, None, 0.0, lam, phi)
    assert d.q_val[0] >= 0 and d.c_val[0] >= 0


def test_generator_bound_on_random_samples(rng):
    co = CoefficientSet(make_drift("nemytskii_arctan", 1), 1.0, 0.5)
    phi = gaussian_bump(0.3, 0.8)
    bound = co.c_bound * seminorm_star(phi, 2)
    worst = 0.0
    for _ in range(1000 // 50):
        lam = EmpiricalMeasure(rng.normal(scale=2.0, size=(50, 4, 1)))
        worst = max(worst, np.abs(characteristics(co, 0.25, 0.0, lam, phi).a_val).max())
    assert worst <= bound


def test_grid_measure_characteristics_and_delta_consistency():
    dx = 0.02
    x = -5 + dx * np.arange(501)
    rho = np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
    gm = GridMeasure(np.array([[-5.0]]), dx, rho[None], np.array([[501]]))
    co = CoefficientSet(make_drift("nemytskii_arctan", 1), 1.0, 0.5)
    phi = gaussian_bump(0.5, 0.7)
    vals = [characteristics(co, d, 0.0, gm, phi).a_val[0] for d in (0.5, 0.25, 0.125)]
    diffs = [abs(b - a) for a, b in zip(vals, vals[1:])]
    assert diffs[1] < diffs[0]
    # Q on a grid measure is the squared cell-sum of R phi
    s = characteristics(co, 0.25, 0.0, gm, phi)
    ref = (0.5 * np.sum(rho * phi.grad(x[:, None])[:, 0]) * dx) ** 2
    assert math.isclose(s.q_val[0], ref, rel_tol=1e-12)


def _zero_cfg(**kw):
    co = CoefficientSet(zero_drift(), 0.0, 0.0, test_mode=True)
    return SimConfig(co, GaussianLaw(), **kw)


def test_residual_examples():
    flow, _ = simulate(_zero_cfg(n=10, T=0.5, dt=0.1, replications=3))
    co = CoefficientSet(zero_drift(), 0.0, 0.0, test_mode=True)
    (s,) = residual_series(flow, co, 0.25, [hermite(2)])
    assert np.all(s.values == 0.0)
    assert np.all(s.predicted_qv == 0.0) and np.all(s.realized_qv == 0.0)


def test_residual_starts_at_zero():
    co = CoefficientSet(make_drift("conv_gaussian", 1), 1.0, 0.3)
    cfg = SimConfig(co, GaussianLaw(), n=20, T=0.3, dt=0.05, replications=4)
    series, _ = simulate_residuals(cfg, [hermite(1), gaussian_bump(0.0, 1.0)])
    for s in series:
        assert np.all(s.values[:, 0] == 0.0) and np.all(np.isfinite(s.values))


def test_plateau_function_has_no_residual():
    co = CoefficientSet(make_drift("conv_sign", 1), 0.1, 0.1, kappa=0.01)
    cfg = SimConfig(co, UniformLaw(-1.0, 1.0), n=30, T=0.2, dt=0.01, replications=5)
    flow, _ = simulate(cfg)
    assert np.abs(flow.positions).max() < 2.0
    (s,) = residual_series(flow, co, 0.25, [_plateau()])
    assert np.abs(s.values).max() < 1e-10
    r = qv_test(s)
    assert r.mean < 1e-10 and r.extra["predicted"] < 1e-10


def test_stream_and_stored_residuals_agree():
    co = CoefficientSet(make_drift("nemytskii_arctan", 1), 1.0, 0.5)
    cfg = SimConfig(co, GaussianLaw(), n=32, T=0.2, dt=0.02, replications=3, seed=5)
    live, _ = simulate_residuals(cfg, [gaussian_bump(0.0, 1.0)])
    flow, _ = simulate(cfg)
    stored = residual_series(flow, co, cfg.delta, [gaussian_bump(0.0, 1.0)])
    np.testing.assert_array_equal(live[0].values, stored[0].values)
    np.testing.assert_array_equal(live[0].predicted_qv, stored[0].predicted_qv)


def _null(R=400, dt=1e-2, drift=None, scale=1.0):
    co = CoefficientSet(drift or zero_drift(), 1.0, 0.0)
    cfg = SimConfig(co, GaussianLaw(), n=64, T=1.0, dt=dt, replications=R, seed=11)
    return simulate_residuals(cfg, [gaussian_bump(0.0, 1.0), hermite(2)],
                              drift_scale=scale)[0]


def test_martingale_null_and_power_small_budget():
    for s in _null():
        r = martingale_test(s, 0.25, 0.75, tanh_functional(s))
        assert r.passed and abs(r.z) <= 3
    for s in _null(drift=constant_drift(-1.0), scale=2.0):
        r = martingale_test(s, 0.25, 0.75, tanh_functional(s))
        assert r.flagged and abs(r.z) > 5


def test_zero_functional_gives_exact_zero():
    (s, _) = _null(R=20)
    r = martingale_test(s, 0.25, 0.75, None)
    assert r.mean == 0.0 and r.z == 0.0 and r.passed


def test_martingale_test_needs_grid_times():
    (s, _) = _null(R=20)
    with pytest.raises(InputError):
        martingale_test(s, 0.255, 0.75)
    with pytest.raises(InputError):
        martingale_test(s, 0.75, 0.25)


def test_qv_small_budget():
    for s in _null(dt=2e-3):
        r = qv_test(s)
        assert r.extra["relative_error"] <= 0.10


def test_polarization_recovers_cross_variation():
    co = CoefficientSet(make_drift("conv_gaussian", 1), 1.0, 0.4)
    cfg = SimConfig(co, GaussianLaw(), n=16, T=0.2, dt=0.02, replications=3)
    phi, psi = gaussian_bump(0.0, 1.0), hermite(2)
    a, b, plus, minus = simulate_residuals(cfg, [phi, psi, phi + psi, phi - psi])[0]
    cross = np.cumsum(np.diff(a.values, axis=1) * np.diff(b.values, axis=1), axis=1)
    pol = polarized_covariation(plus.realized_qv, minus.realized_qv)[:, 1:]
    np.testing.assert_allclose(pol, cross, rtol=1e-9, atol=1e-15)


def test_uniform_residual_bound_small():
    co = CoefficientSet(make_drift("conv_sign", 1), 1.0, 0.5)
    cfg = SimConfig(co, GaussianLaw(), n=64, T=1.0, dt=0.01, replications=40)
    phi = compact_bump(0.0, 1.5)
    (s,) = simulate_residuals(cfg, [phi])[0]
    bound = residual_bound(co, 1.0, seminorm_star(phi, 2)) + 0.05
    assert np.abs(s.values).max() <= bound


def test_loglog_slope():
    assert math.isclose(loglog_slope([1, 2, 4], [8, 4, 2]), -1.0, rel_tol=1e-12)


def test_report_csv(tmp_path):
    (s, _) = _null(R=20)
    reps = [martingale_test(s, 0.25, 0.75, tanh_functional(s)), qv_test(s)]
    write_report_csv(reps, tmp_path / "r.csv")
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert tuple(rows[0]) == REPORT_COLUMNS
    assert rows[1][0] == "martingale" and rows[2][0] == "qv"
