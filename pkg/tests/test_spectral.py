import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, special

from mvlab.errors import CutoffError, InputError, PeriodizationError
from mvlab.spectral import (
    DensityGrid,
    HermiteCoeffTable,
    bessel_norm,
    compact_bump,
    gaussian_bump,
    hermite,
    hermite_coeffs,
    hermite_eval,
    hermite_table,
    hp_norm,
    pairing,
    seminorm_star,
)

SUP_1D = (2 * math.pi) ** 0.25


def _h_closed_form(k, x):
    # 1-based: h_k(x) = He_{k-1}(x) exp(-x^2/4) / sqrt((k-1)! sqrt(2 pi))
    j = k - 1
    return (special.eval_hermitenorm(j, x) * np.exp(-x * x / 4)
            / math.sqrt(math.factorial(j) * math.sqrt(2 * math.pi)))


def test_first_values():
    assert abs(hermite_eval(1, 0.0) - (2 * math.pi) ** -0.25) < 1e-10
    assert hermite_eval(2, 0.0) == 0.0


def test_matches_closed_form():
    x = np.linspace(-6, 6, 101)
    for k in range(1, 21):
        np.testing.assert_allclose(hermite_eval(k, x), _h_closed_form(k, x), atol=1e-12)


def test_orthonormal_by_gauss_quadrature():
    nodes, w = special.roots_hermitenorm(400)
    # weights carry exp(-x^2/2) = (exp(-x^2/4))^2, so divide it back out
    tab = hermite_table(20, nodes) * np.exp(nodes * nodes / 4)
    gram = (tab * w) @ tab.T
    assert np.abs(gram - np.eye(20)).max() <= 1e-8


def test_sup_bound():
    x = np.linspace(-30, 30, 60_001)
    assert np.abs(hermite_table(40, x)).max() <= SUP_1D


def test_multi_index_is_tensor_product(rng):
    x = rng.normal(size=(10, 2))
    np.testing.assert_allclose(hermite_eval((2, 3), x),
                               hermite_eval(2, x[:, 0]) * hermite_eval(3, x[:, 1]))


def test_degree_limits():
    with pytest.raises(CutoffError):
        hermite_eval(513, 0.0)
    with pytest.raises(InputError):
        hermite_eval(0, 0.0)
    hermite_eval(512, 0.0)


def test_coeffs_of_hermite_function_is_unit_vector():
    tab = hermite_coeffs(hermite(3), 12)
    e = np.zeros(12)
    e[2] = 1.0
    assert np.abs(tab.coeffs - e).max() <= 1e-8


def test_coeffs_of_point_mass():
    tab = hermite_coeffs(np.zeros((1, 1)), 30)
    np.testing.assert_array_equal(tab.coeffs, hermite_table(30, 0.0))


def test_gaussian_density_coefficients_vs_quadrature():
    g = gaussian_bump(0.0, 1.0) * (1 / math.sqrt(2 * math.pi))
    tab = hermite_coeffs(g, 16)
    for k in range(1, 17):
        ref, _ = integrate.quad(lambda x: math.exp(-x * x / 2) / math.sqrt(2 * math.pi)
                                * _h_closed_form(k, x), -40, 40, epsabs=1e-14, limit=400)
        assert abs(tab.coeffs[k - 1] - ref) <= 1e-6


def test_hp_norm_examples():
    e3 = HermiteCoeffTable.unit(3, N=5)
    assert math.isclose(hp_norm(e3, 2), 10.0, rel_tol=1e-14)
    tab = hermite_coeffs(np.array([[0.3], [-1.0]]), 10)
    assert math.isclose(hp_norm(tab, 0), float(np.linalg.norm(tab.coeffs)), rel_tol=1e-14)


@given(st.lists(st.floats(-4, 4), min_size=1, max_size=8), st.floats(-3, 3), st.floats(0, 3))
def test_hp_norm_nested(xs, p1, gap):
    tab = hermite_coeffs(np.array(xs)[:, None], 25)
    assert hp_norm(tab, p1) <= hp_norm(tab, p1 + gap) * (1 + 1e-12)


def test_pairing_examples():
    h5 = hermite_coeffs(hermite(5), 10)
    assert abs(pairing(h5, h5) - 1.0) < 1e-8
    delta0 = hermite_coeffs(np.zeros((1, 1)), 40)
    phi = gaussian_bump(0.0, 1.0)
    assert abs(pairing(delta0, hermite_coeffs(phi, 40)) - phi(np.zeros((1, 1)))[0]) < 1e-6
    lam = hermite_coeffs(np.array([[0.4], [1.1]]), 30)
    pt = hermite_coeffs(phi, 30)
    # scaling by a power of two is exact in floating point
    assert pairing(lam.scaled(0.5), pt) == 0.5 * pairing(lam, pt)
    assert math.isclose(pairing(lam.scaled(2.5), pt), 2.5 * pairing(lam, pt), rel_tol=1e-15)
    with pytest.raises(InputError):
        pairing(lam, hermite_coeffs(gaussian_bump(0.0, 1.0, d=2), 5))


@pytest.mark.parametrize("phi", [hermite(2), hermite(7), gaussian_bump(0.0, 1.0),
                                 gaussian_bump(0.5, 0.7)], ids=repr)
def test_pairing_consistency_on_atoms(phi, rng):
    atoms = rng.uniform(-5, 5, size=(20, 1))
    lam = hermite_coeffs(atoms, 60)
    err = abs(pairing(lam, hermite_coeffs(phi, 60)) - phi(atoms).mean())
    assert err < 1e-6


def test_pairing_error_shrinks_with_cutoff_for_compact_bump(rng):
    phi = compact_bump(0.0, 2.0)
    atoms = rng.uniform(-3, 3, size=(10, 1))
    errs = [abs(pairing(hermite_coeffs(atoms, N), hermite_coeffs(phi, N)) - phi(atoms).mean())
            for N in (10, 40, 160)]
    assert errs[2] < errs[0]


@pytest.mark.parametrize("phi", [hermite(4), gaussian_bump(0.3, 0.8), compact_bump(0.2, 1.5),
                                 hermite((2, 3)), gaussian_bump([0.1, -0.2], 0.9, 2),
                                 compact_bump([0.0, 0.5], 1.2, 2),
                                 hermite(2) * gaussian_bump(1.0, 2.0) + 0.5 * hermite(1)],
                         ids=repr)
def test_derivatives_match_finite_differences(phi, rng):
    d = phi.d
    x = rng.uniform(-1.5, 1.5, size=(100, d))
    h = 1e-5
    g = phi.grad(x)
    H = phi.hess(x)
    for a in range(d):
        e = np.zeros(d)
        e[a] = h
        fd = (phi(x + e) - phi(x - e)) / (2 * h)
        scale = max(1.0, np.abs(g).max())
        assert np.abs(fd - g[:, a]).max() <= 1e-6 * scale
        fd2 = (phi.grad(x + e) - phi.grad(x - e)) / (2 * h)
        assert np.abs(fd2 - H[:, :, a]).max() <= 1e-6 * max(1.0, np.abs(H).max())


def test_seminorm_examples():
    g = gaussian_bump(0.0, 1.0) * (1 / math.sqrt(2 * math.pi))
    assert abs(seminorm_star(g, 0) - 1 / math.sqrt(2 * math.pi)) < 1e-9
    b = compact_bump(0.0, 1.0)
    v = seminorm_star(b, 2)
    assert 0 < v < math.inf


def test_seminorm_refinement_stable():
    phi = gaussian_bump(0.5, 0.7)
    for m in (0, 1, 2):
        coarse = seminorm_star(phi, m, resolution=4001)
        fine = seminorm_star(phi, m, resolution=8001)
        assert abs(coarse - fine) <= 1e-4 * fine


def test_seminorm_order_limit():
    with pytest.raises(InputError):
        seminorm_star(hermite(2), 3)


def _gauss_grid(res, L=10.0, d=1):
    return DensityGrid.from_function(
        lambda x: np.exp(-0.5 * np.sum(x * x, axis=-1)) / (2 * math.pi) ** (d / 2), d, L, res)


def test_bessel_norm_w0_is_lr_norm():
    g = _gauss_grid(256)
    for r in (1.5, 2.0, 3.0):
        assert math.isclose(bessel_norm(g, 0.0, r), g.lr_norm(r), rel_tol=1e-12)


def test_bessel_norm_resolution_convergence():
    a = bessel_norm(_gauss_grid(512), 1.0, 2.0)
    b = bessel_norm(_gauss_grid(2048), 1.0, 2.0)
    assert abs(a - b) <= 1e-4 * b


def test_bessel_norm_against_parseval_oracle():
    # ||J^1 g||_2^2 = int (1 + xi^2) |ghat|^2 dxi / 2pi for the standard Gaussian
    ref = math.sqrt((1 / (2 * math.sqrt(math.pi))) * 1.5)
    assert abs(bessel_norm(_gauss_grid(1024), 1.0, 2.0) - ref) < 1e-8


def test_bessel_norm_monotone_in_w():
    g = _gauss_grid(512)
    assert bessel_norm(g, 1.0, 2.0) <= bessel_norm(g, 2.0, 2.0)


def test_bessel_norm_guards():
    wide = DensityGrid.from_function(lambda x: np.exp(-0.5 * x[..., 0] ** 2), 1, 3.0, 128)
    with pytest.raises(PeriodizationError):
        bessel_norm(wide, 1.0, 2.0)
    with pytest.raises(InputError):
        bessel_norm(_gauss_grid(64), 1.0, 1.0)


def test_l2_coincidence_for_smooth_grid():
    g = DensityGrid.from_function(
        lambda x: np.exp(-0.5 * ((x[..., 0] - 0.3) / 0.8) ** 2) / (0.8 * math.sqrt(2 * math.pi)),
        1, 25.0, 2048)
    tab = hermite_coeffs(g, 60)
    assert not tab.warnings
    assert abs(hp_norm(tab, 0) - g.lr_norm(2)) < 1e-4


def test_small_box_warns():
    g = _gauss_grid(128, L=5.0)
    assert hermite_coeffs(g, 60).warnings


def test_grid_io_round_trip(tmp_path):
    g = _gauss_grid(32, L=4.0, d=2)
    g.to_csv(tmp_path / "g.csv")
    g.to_binary(tmp_path / "g.bin")
    for back in (DensityGrid.from_csv(tmp_path / "g.csv"),
                 DensityGrid.from_binary(tmp_path / "g.bin")):
        assert back.d == 2 and back.L == 4.0 and back.resolution == 32
        np.testing.assert_array_equal(back.values, g.values)
    raw = (tmp_path / "g.bin").read_bytes()
    assert raw[:8] == (2).to_bytes(8, "little")
    assert len(raw) == 24 + 8 * 32 * 32


def test_grid_mass_and_validation():
    assert abs(_gauss_grid(512).mass - 1.0) < 1e-4
    with pytest.raises(InputError):
        DensityGrid(1, 1.0, 4, np.array([0.1, -0.2, 0.3, 0.1]))


def test_table_immutable():
    tab = hermite_coeffs(np.zeros((2, 1)), 5)
    with pytest.raises(ValueError):
        tab.coeffs[0] = 1.0
