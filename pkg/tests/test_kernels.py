import numpy as np
import pytest

from mvlab import _backend, kernels, rng as mrng
from mvlab.kernels import _nb, _np
from mvlab.mollify import norm_const


def test_philox_matches_numpy_bit_generator(backend):
    key = np.array([[123, 456], [2**63 + 5, 0]], dtype=np.uint64)
    ctr = np.array([[5, 7, 9, 11], [1, 0, 0, 2**64 - 1]], dtype=np.uint64)
    got = kernels.philox_block(ctr, key)
    for row in range(2):
        c = ctr[row].copy()
        # numpy increments the counter before producing a block
        c[0] -= np.uint64(1)
        ref = np.random.Philox(counter=c, key=key[row]).random_raw(4)
        np.testing.assert_array_equal(got[row], ref)


def test_backends_agree_on_random_streams():
    reps, streams = np.arange(3), np.array([0, 5, 99])
    for fn, arg in ((lambda m: m.philox_uniforms, 7), (lambda m: m.philox_normals, 5)):
        a = fn(_nb)(np.uint64(11), reps.astype(np.uint64), streams.astype(np.uint64),
                    np.uint64(1), np.uint64(42), arg)
        b = fn(_np)(np.uint64(11), reps.astype(np.uint64), streams.astype(np.uint64),
                    np.uint64(1), np.uint64(42), arg)
        np.testing.assert_array_equal(a, b)


def test_uniforms_in_open_interval():
    u = mrng.uniforms(0, np.arange(4), np.arange(1000), 0, 0, 4)
    assert u.shape == (4, 1000, 4)
    assert u.min() > 0.0 and u.max() < 1.0


def test_normals_moments():
    z = mrng.normals(3, [0], np.arange(50_000), mrng.PARTICLE, 0, 2)
    assert abs(z.mean()) < 4 / np.sqrt(z.size)
    assert abs(z.var() - 1.0) < 0.03


def test_streams_are_addressable():
    full = mrng.normals(9, np.arange(4), np.arange(10), 0, 3, 1)
    part = mrng.normals(9, [2], [7], 0, 3, 1)
    assert full[2, 7, 0] == part[0, 0, 0]
    other = mrng.normals(9, [2], [7], 0, 4, 1)
    assert other[0, 0, 0] != part[0, 0, 0]


def test_seed_range():
    with pytest.raises(ValueError):
        mrng.normals(-1, [0], [0], 0, 0, 1)
    with pytest.raises(ValueError):
        mrng.normals(2**64, [0], [0], 0, 0, 1)


def _both(name, *args):
    return getattr(_nb, name)(*args), getattr(_np, name)(*args)


def test_kde_grid_backends_agree(rng):
    pts = rng.normal(size=(3, 40))
    lo = pts.min(axis=1) - 0.6
    a, b = _both("kde_grid_1d", pts, lo, 0.02, 200, 0.5, norm_const(1))
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-14)
    pts2 = rng.normal(size=(2, 30, 2))
    lo2 = pts2.min(axis=1) - 0.6
    a, b = _both("kde_grid_2d", pts2, lo2, 0.05, 120, 110, 0.5, norm_const(2))
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-14)


def test_kde_points_backends_agree(rng):
    pts = rng.normal(size=(2, 25, 2))
    qs = rng.normal(size=(2, 17, 2))
    a, b = _both("kde_points", pts, qs, 0.7, norm_const(2))
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-15)


def test_conv_and_interp_backends_agree(rng):
    v1 = rng.normal(size=(2, 50, 1))
    taps = np.array([0.25, 0.5, 0.25])
    a, b = _both("conv_same_1d", v1, taps)
    np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-15)
    v2 = rng.normal(size=(2, 20, 15, 2))
    t2 = np.outer(taps, taps)
    a, b = _both("conv_same_2d", v2, t2)
    np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-15)
    lo = np.zeros(2)
    pts = rng.uniform(0, 0.9, size=(2, 13))
    a, b = _both("interp_1d", v1, lo, 0.02, pts)
    np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-15)
    lo2 = np.zeros((2, 2))
    pts2 = rng.uniform(0, 0.25, size=(2, 9, 2))
    a, b = _both("interp_2d", v2, lo2, 0.02, pts2)
    np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-15)


def test_interp_is_exact_on_linear_data():
    x = np.arange(30) * 0.1
    vals = (2.0 * x - 1.0)[None, :, None]
    q = np.array([[0.05, 1.234, 2.88]])
    out = kernels.interp_1d(vals, np.zeros(1), 0.1, q)
    np.testing.assert_allclose(out[0, :, 0], 2.0 * q[0] - 1.0, rtol=1e-13)


def test_set_backend_validates():
    with pytest.raises(ValueError):
        _backend.set_backend("fortran")


def test_env_flag_parsing(monkeypatch):
    monkeypatch.setenv("MVLAB_NUMBA", "off")
    assert not _backend._env_wants_numba()
    monkeypatch.setenv("MVLAB_NUMBA", "1")
    assert _backend._env_wants_numba()


def test_backend_benchmark_smoke():
    import runpy
    from pathlib import Path

    bench = runpy.run_path(str(Path(__file__).parents[1] / "benchmarks" / "bench_backends.py"))
    rows = bench["run"](repeat=1, quick=True)
    assert {r["case"] for r in rows} >= {"simulate", "kde_grid_1d"}
    assert all(r["max_abs_diff"] < 1e-12 for r in rows)
