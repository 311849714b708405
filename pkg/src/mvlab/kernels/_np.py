"""Vectorized numpy fallbacks for the numba kernels in ``_nb``."""
from __future__ import annotations

import numpy as np

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_TWO_M53 = 2.0 ** -53
_HALF_ULP = 2.0 ** -54

# cap on temporaries (elements) for chunked broadcasts
_CHUNK = 1 << 22


def _mulhilo(a, b):
    a_lo = a & _MASK32
    a_hi = a >> _S32
    b_lo = b & _MASK32
    b_hi = b >> _S32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> _S32) + (lh & _MASK32) + (hl & _MASK32)
    hi = hh + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)
    return hi, a * b


def _philox(c0, c1, c2, c3, k0, k1):
    k0 = np.array(k0, dtype=np.uint64, copy=True)
    k1 = np.array(k1, dtype=np.uint64, copy=True)
    with np.errstate(over="ignore"):
        for r in range(10):
            if r > 0:
                k0 = k0 + _W0
                k1 = k1 + _W1
            hi0, lo0 = _mulhilo(_M0, c0)
            hi1, lo1 = _mulhilo(_M1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


def philox_block(ctr, key):
    ctr = np.asarray(ctr, dtype=np.uint64)
    key = np.asarray(key, dtype=np.uint64)
    words = _philox(ctr[:, 0], ctr[:, 1], ctr[:, 2], ctr[:, 3], key[:, 0], key[:, 1])
    return np.stack(words, axis=1)


def _to_unit(x):
    return (x >> _S11).astype(np.float64) * _TWO_M53 + _HALF_ULP


def _words(seed, rep_ids, stream_ids, tag, step, nblk):
    R, S = rep_ids.shape[0], stream_ids.shape[0]
    shape = (R, S, nblk)
    c0 = np.full(shape, step, dtype=np.uint64)
    c1 = np.broadcast_to(stream_ids.astype(np.uint64)[None, :, None], shape)
    c2 = np.broadcast_to(np.arange(nblk, dtype=np.uint64)[None, None, :], shape)
    c3 = np.full(shape, tag, dtype=np.uint64)
    k0 = np.full(shape, seed, dtype=np.uint64)
    k1 = np.broadcast_to(rep_ids.astype(np.uint64)[:, None, None], shape)
    return _philox(c0, c1, c2, c3, k0, k1)


def philox_uniforms(seed, rep_ids, stream_ids, tag, step, count):
    nblk = (count + 3) // 4
    w = _words(seed, rep_ids, stream_ids, tag, step, nblk)
    u = np.stack([_to_unit(x) for x in w], axis=-1)  # (R, S, nblk, 4)
    return u.reshape(u.shape[0], u.shape[1], 4 * nblk)[:, :, :count]


def philox_normals(seed, rep_ids, stream_ids, tag, step, dim):
    nblk = (dim + 3) // 4
    w0, w1, w2, w3 = _words(seed, rep_ids, stream_ids, tag, step, nblk)
    two_pi = 2.0 * np.pi
    rad = np.sqrt(-2.0 * np.log(_to_unit(w0)))
    ang = two_pi * _to_unit(w1)
    rad2 = np.sqrt(-2.0 * np.log(_to_unit(w2)))
    ang2 = two_pi * _to_unit(w3)
    z = np.stack([rad * np.cos(ang), rad * np.sin(ang),
                  rad2 * np.cos(ang2), rad2 * np.sin(ang2)], axis=-1)
    return z.reshape(z.shape[0], z.shape[1], 4 * nblk)[:, :, :dim]


def _bump(r2):
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


def kde_grid_1d(points, lo, dx, nx, delta, norm):
    R, n = points.shape
    w = int(np.ceil(delta / dx)) + 1
    offs = np.arange(-w, w + 1)
    j0 = np.floor((points - lo[:, None]) / dx + 0.5).astype(np.int64)
    J = j0[:, :, None] + offs
    u = (lo[:, None, None] + J * dx - points[:, :, None]) / delta
    v = _bump(u * u) * (norm / delta / n)
    ok = (J >= 0) & (J < nx) & (v > 0.0)
    flat = (np.arange(R)[:, None, None] * nx + J)[ok]
    return np.bincount(flat, weights=v[ok], minlength=R * nx).reshape(R, nx)


def kde_grid_2d(points, lo, dx, nx, ny, delta, norm):
    R, n, _ = points.shape
    w = int(np.ceil(delta / dx)) + 1
    offs = np.arange(-w, w + 1)
    out = np.zeros(R * nx * ny)
    scale = norm / (delta * delta) / n
    step = max(1, _CHUNK // max(1, n * offs.size ** 2))
    for a in range(0, R, step):
        pts = points[a:a + step]
        lo_c = lo[a:a + step]
        rr = np.arange(a, a + pts.shape[0])
        j0 = np.floor((pts[..., 0] - lo_c[:, 0:1]) / dx + 0.5).astype(np.int64)
        k0 = np.floor((pts[..., 1] - lo_c[:, 1:2]) / dx + 0.5).astype(np.int64)
        J = (j0[:, :, None] + offs)[:, :, :, None]
        K = (k0[:, :, None] + offs)[:, :, None, :]
        u0 = (lo_c[:, 0, None, None, None] + J * dx - pts[..., 0, None, None]) / delta
        u1 = (lo_c[:, 1, None, None, None] + K * dx - pts[..., 1, None, None]) / delta
        v = _bump(u0 * u0 + u1 * u1) * scale
        J, K = np.broadcast_arrays(J, K)
        ok = (J >= 0) & (J < nx) & (K >= 0) & (K < ny) & (v > 0.0)
        flat = ((rr[:, None, None, None] * nx + J) * ny + K)[ok]
        out += np.bincount(flat, weights=v[ok], minlength=out.size)
    return out.reshape(R, nx, ny)


def kde_points(points, queries, delta, norm):
    R, n, d = points.shape
    q = queries.shape[1]
    out = np.empty((R, q))
    step = max(1, _CHUNK // max(1, R * n * d))
    for a in range(0, q, step):
        diff = (points[:, None, :, :] - queries[:, a:a + step, None, :]) / delta
        r2 = np.sum(diff * diff, axis=-1)
        out[:, a:a + step] = _bump(r2).sum(axis=-1)
    return out * (norm / delta ** d / n)


def conv_same_1d(values, taps):
    R, nx, C = values.shape
    w = (taps.shape[0] - 1) // 2
    out = np.zeros_like(values, dtype=np.float64)
    for k in range(taps.shape[0]):
        s = k - w
        lo_j, hi_j = max(0, -s), min(nx, nx - s)
        if lo_j >= hi_j:
            continue
        out[:, lo_j:hi_j] += taps[k] * values[:, lo_j + s:hi_j + s]
    return out


def conv_same_2d(values, taps):
    R, nx, ny, C = values.shape
    w = (taps.shape[0] - 1) // 2
    out = np.zeros_like(values, dtype=np.float64)
    for a in range(taps.shape[0]):
        s = a - w
        j_lo, j_hi = max(0, -s), min(nx, nx - s)
        if j_lo >= j_hi:
            continue
        for b in range(taps.shape[1]):
            t = b - w
            k_lo, k_hi = max(0, -t), min(ny, ny - t)
            if k_lo >= k_hi:
                continue
            out[:, j_lo:j_hi, k_lo:k_hi] += taps[a, b] * values[:, j_lo + s:j_hi + s,
                                                               k_lo + t:k_hi + t]
    return out


def interp_1d(values, lo, dx, pts):
    R, nx, C = values.shape
    s = (pts - lo[:, None]) / dx
    j = np.clip(np.floor(s).astype(np.int64), 0, nx - 2)
    f = np.clip(s - j, 0.0, 1.0)[..., None]
    v0 = np.take_along_axis(values, j[..., None], axis=1)
    v1 = np.take_along_axis(values, j[..., None] + 1, axis=1)
    return (1.0 - f) * v0 + f * v1


def interp_2d(values, lo, dx, pts):
    R, nx, ny, C = values.shape
    s0 = (pts[..., 0] - lo[:, 0:1]) / dx
    s1 = (pts[..., 1] - lo[:, 1:2]) / dx
    j = np.clip(np.floor(s0).astype(np.int64), 0, nx - 2)
    k = np.clip(np.floor(s1).astype(np.int64), 0, ny - 2)
    f = np.clip(s0 - j, 0.0, 1.0)[..., None]
    g = np.clip(s1 - k, 0.0, 1.0)[..., None]
    flat = values.reshape(R, nx * ny, C)

    def at(jj, kk):
        return np.take_along_axis(flat, (jj * ny + kk)[..., None], axis=1)

    return ((1.0 - f) * (1.0 - g) * at(j, k) + f * (1.0 - g) * at(j + 1, k)
            + (1.0 - f) * g * at(j, k + 1) + f * g * at(j + 1, k + 1))
