import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mvlab.coeffs import (
    CoefficientSet,
    SamplePlan,
    constant_drift,
    make_convolution_drift,
    make_custom_drift,
    make_nemytskii_drift,
    verify_assumptions,
    w1_distance_1d,
    zero_drift,
)
from mvlab.errors import DensityRequiredError, InputError, UnsupportedDimensionError
from mvlab.lab.registry import DRIFTS, make_drift
from mvlab.measures import EmpiricalMeasure
from mvlab.mollify import MollifierSpec, SmoothedEmpirical

# 30-digit mpmath value of the unit-scale bump peak in 1-D
H0_1D = 0.828568839869105151664159062986


def _atoms(*xs):
    return EmpiricalMeasure(np.array(xs, dtype=float)[None, :, None])


def test_convolution_with_point_mass_returns_kernel():
    spec = MollifierSpec(1, 1.0)
    b = make_convolution_drift(lambda t, y: spec.profile(y)[..., None], H0_1D)
    y = np.linspace(-1.2, 1.2, 13)
    out = b(0.0, y[:, None], _atoms(0.0))[0, :, 0]
    np.testing.assert_array_equal(out, spec.profile(y[:, None]))


def test_convolution_antisymmetric_example():
    b = make_convolution_drift(lambda t, y: y * (np.abs(y) <= 2), 2.0)
    assert b(0.0, [[0.0]], _atoms(-1.0, 1.0))[0, 0, 0] == 0.0


def test_convolution_is_linear_in_measure(rng):
    b = make_drift("conv_gaussian", 1, {"strength": 1.3})
    xs, ys = rng.normal(size=5), rng.normal(size=3)
    q = rng.normal(size=(7, 1))
    a = 0.3
    mix = EmpiricalMeasure(np.concatenate([xs, ys])[None, :, None],
                           weights=np.concatenate([np.full(5, a / 5), np.full(3, (1 - a) / 3)]))
    lhs = b(0.0, q, mix)
    rhs = a * b(0.0, q, _atoms(*xs)) + (1 - a) * b(0.0, q, _atoms(*ys))
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-15)


def test_nemytskii_constant_density():
    b = make_nemytskii_drift(lambda t, x, rho: np.arctan(rho), math.pi / 2)
    lam = EmpiricalMeasure(np.zeros((1, 1, 1)),
                           density_source=lambda y: np.where((y[..., 0] >= 0) & (y[..., 0] <= 2),
                                                             0.5, 0.0))
    out = b(0.0, np.linspace(0, 2, 5)[:, None], lam)
    np.testing.assert_array_equal(out, math.atan(0.5))


def test_nemytskii_zero_and_capped():
    zero = make_nemytskii_drift(lambda t, x, rho: 0.0 * rho, 0.0)
    sm = SmoothedEmpirical(np.zeros((1, 1, 1)), MollifierSpec(1, 1.0))
    assert zero(0.0, [[0.3]], sm)[0, 0, 0] == 0.0
    capped = make_nemytskii_drift(lambda t, x, rho: np.minimum(rho, 1.0), 1.0)
    assert abs(capped(0.0, [[0.0]], sm)[0, 0, 0] - min(H0_1D, 1.0)) < 1e-13


def test_nemytskii_needs_density():
    b = make_nemytskii_drift(lambda t, x, rho: np.arctan(rho), math.pi / 2)
    with pytest.raises(DensityRequiredError):
        b(0.0, [[0.0]], _atoms(0.0, 1.0))


def test_nemytskii_depends_only_on_density_value():
    b = make_drift("nemytskii_arctan", 1)
    src = lambda y: np.full(y.shape[:2], 0.7)
    m1 = EmpiricalMeasure(np.zeros((1, 3, 1)), density_source=src)
    m2 = EmpiricalMeasure(np.ones((1, 9, 1)), density_source=src)
    np.testing.assert_array_equal(b(0.0, [[0.2]], m1), b(0.0, [[0.2]], m2))


@pytest.mark.parametrize("name", sorted(DRIFTS))
def test_shipped_drifts_respect_declared_bound(name, rng):
    for d in (1, 2):
        b = make_drift(name, d)
        lam = SmoothedEmpirical(rng.normal(size=(1, 8, d)), MollifierSpec(d, 0.2))
        y = rng.normal(scale=2.0, size=(1, 10_000, d))
        vals = b(rng.uniform(), y, lam)
        assert np.linalg.norm(vals, axis=-1).max() <= b.sup_bound


def test_grid_fft_matches_atom_sum(rng):
    from mvlab.mollify import drift_grid
    b = make_drift("conv_sign", 1, {"radius": 0.8})
    atoms = rng.normal(size=(2, 30, 1))
    gm, _ = drift_grid(b, 0.0, atoms, MollifierSpec(1, 0.3))
    fft = b.on_grid(0.0, gm)
    direct = b._atom_sum(0.0, gm.nodes().reshape(2, -1, 1),
                         gm.nodes().reshape(2, -1, 1),
                         gm.values.reshape(2, -1) * gm.dx)
    for r in range(2):
        e = int(gm.extent[r][0])
        np.testing.assert_allclose(fft[r, :e], direct.reshape(fft.shape)[r, :e],
                                   atol=1e-12)


def test_w1_examples():
    assert w1_distance_1d([2.0], [-1.5]) == 3.5
    assert w1_distance_1d([0.0, 1.0], [0.5, 0.5]) == 0.5
    assert w1_distance_1d([0.3, 4.0, -1.0], [4.0, -1.0, 0.3]) == 0.0


def test_w1_weighted_matches_splitting():
    mu = EmpiricalMeasure(np.array([[[0.0], [1.0]]]), weights=np.array([0.25, 0.75]))
    split = [0.0, 1.0, 1.0, 1.0]
    assert math.isclose(w1_distance_1d(mu, [0.2, 0.4, 0.6, 0.8]),
                        w1_distance_1d(split, [0.2, 0.4, 0.6, 0.8]), rel_tol=1e-14)


def test_w1_rejects_higher_dimension():
    with pytest.raises(UnsupportedDimensionError):
        w1_distance_1d(np.zeros((3, 2)), np.zeros((3, 2)))


atoms3 = st.lists(st.floats(-10, 10), min_size=4, max_size=4)


@given(atoms3, atoms3, atoms3)
def test_w1_metric_properties(a, b, c):
    ab, ba = w1_distance_1d(a, b), w1_distance_1d(b, a)
    assert abs(ab - ba) <= 1e-12
    assert ab <= w1_distance_1d(a, c) + w1_distance_1d(c, b) + 1e-12
    assert ab >= 0


def test_identity_sigma_is_elliptic(rng):
    co = CoefficientSet(zero_drift(), 1.0, 0.0)
    x = rng.normal(size=(20, 1))
    rep = verify_assumptions(co, SamplePlan(np.zeros(20), x, x + 0.1, z=rng.normal(size=(20, 1))))
    assert rep.observed_kappa == 1.0 and rep.kappa_ok


def test_zero_sigma_fails_ellipticity(rng):
    with pytest.raises(InputError):
        CoefficientSet(zero_drift(), 0.0, 0.0)
    co = CoefficientSet(zero_drift(), 0.0, 0.0, test_mode=True, kappa=0.5)
    x = rng.normal(size=(5, 1))
    rep = verify_assumptions(co, SamplePlan(np.zeros(5), x, x))
    assert not rep.kappa_ok and not rep.passed


def test_hoelder_ratio_against_dense_oracle(rng):
    # dense-grid Lipschitz constant of 1/(1+x^2); the max is 3*sqrt(3)/8 at 1/sqrt(3)
    g = np.linspace(-5, 5, 200_001)
    oracle = np.abs(np.diff(1 / (1 + g * g))).max() / (g[1] - g[0])
    assert abs(oracle - 3 * math.sqrt(3) / 8) < 1e-6
    sig = lambda t, x, mu: (1.0 / (1.0 + np.sum(x * x, axis=-1)))[..., None, None]
    co = CoefficientSet(constant_drift(0.5), sig, 0.0, sigma_sup=1.0, kappa=1e-3,
                        hoelder_C=oracle)
    x = rng.uniform(-3, 3, size=(400, 1))
    x2 = x + rng.normal(scale=0.05, size=x.shape)
    rep = verify_assumptions(co, SamplePlan(np.zeros(400), x, x2))
    assert 0 < rep.sigma_ratio <= oracle
    assert rep.sigma_ratio > 0.8 * oracle
    assert rep.hoelder_ok and rep.b_ok


def test_measure_pairs_in_2d_rejected():
    co = CoefficientSet(zero_drift(2), np.eye(2), np.zeros((2, 1)), d=2)
    plan = SamplePlan([0.0], [[0.0, 0.0]], [[1.0, 0.0]], mu=[np.zeros((3, 2))],
                      mu2=[np.ones((3, 2))])
    with pytest.raises(UnsupportedDimensionError):
        verify_assumptions(co, plan)


def test_drift_bound_check_uses_smoothing_for_nemytskii(rng):
    co = CoefficientSet(make_drift("nemytskii_arctan", 1), 1.0, 0.5)
    mus = [rng.normal(size=(10, 1)) for _ in range(6)]
    plan = SamplePlan(np.zeros(6), rng.normal(size=(6, 1)), rng.normal(size=(6, 1)),
                      mu=mus, mu2=mus[::-1])
    rep = verify_assumptions(co, plan)
    assert 0 < rep.observed_b_sup <= math.pi / 2 and rep.b_ok


def test_declared_constants_validated():
    with pytest.raises(InputError):
        CoefficientSet(constant_drift(1.0), 1.0, 0.0, b_sup=0.0)
    with pytest.raises(InputError):
        CoefficientSet(zero_drift(), 1.0, 0.0, beta=1.5)
    with pytest.raises(InputError):
        CoefficientSet(zero_drift(), 1.0, 0.0, hoelder_C=0.0)
    with pytest.raises(InputError):
        CoefficientSet(zero_drift(), lambda t, x, mu: x, 0.0)


def test_c_bound():
    co = CoefficientSet(constant_drift(2.0), 3.0, 4.0)
    assert co.c_bound == 2.0 + 0.5 * (9.0 + 16.0)


def test_diffusion_matrix(rng):
    co = CoefficientSet(zero_drift(2), [[1.0, 0.0], [0.5, 2.0]], [[1.0], [1.0]], d=2,
                        kappa=0.1)
    a = co.diffusion_matrix(0.0, rng.normal(size=(3, 2)), None)
    s = np.array([[1.0, 0.0], [0.5, 2.0]])
    np.testing.assert_allclose(a[0, 0], s @ s.T + np.ones((2, 2)))


def test_custom_drift_scalar_output_in_2d_rejected():
    b = make_custom_drift(lambda t, y, lam: y[..., 0], 1.0, d=2)
    with pytest.raises(InputError):
        b(0.0, np.zeros((3, 2)), None)
