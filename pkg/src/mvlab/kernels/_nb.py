"""Numba implementations of the hot loops.  Signatures mirror ``_np``."""
from __future__ import annotations

import math

import numpy as np

from mvlab._backend import njit

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_TWO_M53 = 2.0 ** -53
_HALF_ULP = 2.0 ** -54


@njit
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


@njit
def _philox(c0, c1, c2, c3, k0, k1):
    for r in range(10):
        if r > 0:
            k0 = k0 + _W0
            k1 = k1 + _W1
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@njit
def philox_block(ctr, key):
    n = ctr.shape[0]
    out = np.empty((n, 4), dtype=np.uint64)
    for i in range(n):
        a, b, c, d = _philox(ctr[i, 0], ctr[i, 1], ctr[i, 2], ctr[i, 3],
                             key[i, 0], key[i, 1])
        out[i, 0] = a
        out[i, 1] = b
        out[i, 2] = c
        out[i, 3] = d
    return out


@njit
def _to_unit(x):
    return float(x >> _S11) * _TWO_M53 + _HALF_ULP


@njit
def philox_uniforms(seed, rep_ids, stream_ids, tag, step, count):
    R = rep_ids.shape[0]
    S = stream_ids.shape[0]
    nblk = (count + 3) // 4
    out = np.empty((R, S, count))
    k0 = np.uint64(seed)
    c0 = np.uint64(step)
    c3 = np.uint64(tag)
    for r in range(R):
        k1 = np.uint64(rep_ids[r])
        for s in range(S):
            c1 = np.uint64(stream_ids[s])
            for b in range(nblk):
                w0, w1, w2, w3 = _philox(c0, c1, np.uint64(b), c3, k0, k1)
                base = 4 * b
                if base < count:
                    out[r, s, base] = _to_unit(w0)
                if base + 1 < count:
                    out[r, s, base + 1] = _to_unit(w1)
                if base + 2 < count:
                    out[r, s, base + 2] = _to_unit(w2)
                if base + 3 < count:
                    out[r, s, base + 3] = _to_unit(w3)
    return out


@njit
def philox_normals(seed, rep_ids, stream_ids, tag, step, dim):
    R = rep_ids.shape[0]
    S = stream_ids.shape[0]
    nblk = (dim + 3) // 4
    out = np.empty((R, S, dim))
    k0 = np.uint64(seed)
    c0 = np.uint64(step)
    c3 = np.uint64(tag)
    two_pi = 2.0 * math.pi
    for r in range(R):
        k1 = np.uint64(rep_ids[r])
        for s in range(S):
            c1 = np.uint64(stream_ids[s])
            for b in range(nblk):
                w0, w1, w2, w3 = _philox(c0, c1, np.uint64(b), c3, k0, k1)
                rad = math.sqrt(-2.0 * math.log(_to_unit(w0)))
                ang = two_pi * _to_unit(w1)
                base = 4 * b
                if base < dim:
                    out[r, s, base] = rad * math.cos(ang)
                if base + 1 < dim:
                    out[r, s, base + 1] = rad * math.sin(ang)
                if base + 2 < dim:
                    rad2 = math.sqrt(-2.0 * math.log(_to_unit(w2)))
                    ang2 = two_pi * _to_unit(w3)
                    out[r, s, base + 2] = rad2 * math.cos(ang2)
                    if base + 3 < dim:
                        out[r, s, base + 3] = rad2 * math.sin(ang2)
    return out


@njit
def _bump(r2):
    if r2 < 1.0:
        return math.exp(-1.0 / (1.0 - r2))
    return 0.0


@njit
def kde_grid_1d(points, lo, dx, nx, delta, norm):
    R, n = points.shape
    out = np.zeros((R, nx))
    scale = norm / delta / n
    for r in range(R):
        for i in range(n):
            x = points[r, i]
            j0 = int(math.floor((x - lo[r]) / dx + 0.5))
            w = int(math.ceil(delta / dx)) + 1
            for j in range(j0 - w, j0 + w + 1):
                if j < 0 or j >= nx:
                    continue
                u = (lo[r] + j * dx - x) / delta
                v = _bump(u * u)
                if v > 0.0:
                    out[r, j] += v * scale
    return out


@njit
def kde_grid_2d(points, lo, dx, nx, ny, delta, norm):
    R, n, _ = points.shape
    out = np.zeros((R, nx, ny))
    scale = norm / (delta * delta) / n
    w = int(math.ceil(delta / dx)) + 1
    for r in range(R):
        for i in range(n):
            x0 = points[r, i, 0]
            x1 = points[r, i, 1]
            j0 = int(math.floor((x0 - lo[r, 0]) / dx + 0.5))
            k0 = int(math.floor((x1 - lo[r, 1]) / dx + 0.5))
            for j in range(j0 - w, j0 + w + 1):
                if j < 0 or j >= nx:
                    continue
                u0 = (lo[r, 0] + j * dx - x0) / delta
                for k in range(k0 - w, k0 + w + 1):
                    if k < 0 or k >= ny:
                        continue
                    u1 = (lo[r, 1] + k * dx - x1) / delta
                    v = _bump(u0 * u0 + u1 * u1)
                    if v > 0.0:
                        out[r, j, k] += v * scale
    return out


@njit
def kde_points(points, queries, delta, norm):
    R, n, d = points.shape
    q = queries.shape[1]
    out = np.zeros((R, q))
    scale = norm / delta ** d / n
    for r in range(R):
        for a in range(q):
            acc = 0.0
            for i in range(n):
                r2 = 0.0
                for c in range(d):
                    u = (points[r, i, c] - queries[r, a, c]) / delta
                    r2 += u * u
                acc += _bump(r2)
            out[r, a] = acc * scale
    return out


@njit
def conv_same_1d(values, taps):
    R, nx, C = values.shape
    w = (taps.shape[0] - 1) // 2
    out = np.zeros((R, nx, C))
    for r in range(R):
        for j in range(nx):
            for k in range(taps.shape[0]):
                src = j + k - w
                if src < 0 or src >= nx:
                    continue
                t = taps[k]
                for c in range(C):
                    out[r, j, c] += t * values[r, src, c]
    return out


@njit
def conv_same_2d(values, taps):
    R, nx, ny, C = values.shape
    w = (taps.shape[0] - 1) // 2
    out = np.zeros((R, nx, ny, C))
    for r in range(R):
        for j in range(nx):
            for k in range(ny):
                for a in range(taps.shape[0]):
                    sj = j + a - w
                    if sj < 0 or sj >= nx:
                        continue
                    for b in range(taps.shape[1]):
                        sk = k + b - w
                        if sk < 0 or sk >= ny:
                            continue
                        t = taps[a, b]
                        for c in range(C):
                            out[r, j, k, c] += t * values[r, sj, sk, c]
    return out


@njit
def interp_1d(values, lo, dx, pts):
    R, nx, C = values.shape
    n = pts.shape[1]
    out = np.empty((R, n, C))
    for r in range(R):
        for i in range(n):
            s = (pts[r, i] - lo[r]) / dx
            j = int(math.floor(s))
            if j < 0:
                j = 0
            if j > nx - 2:
                j = nx - 2
            f = s - j
            if f < 0.0:
                f = 0.0
            if f > 1.0:
                f = 1.0
            for c in range(C):
                out[r, i, c] = (1.0 - f) * values[r, j, c] + f * values[r, j + 1, c]
    return out


@njit
def interp_2d(values, lo, dx, pts):
    R, nx, ny, C = values.shape
    n = pts.shape[1]
    out = np.empty((R, n, C))
    for r in range(R):
        for i in range(n):
            s0 = (pts[r, i, 0] - lo[r, 0]) / dx
            s1 = (pts[r, i, 1] - lo[r, 1]) / dx
            j = min(max(int(math.floor(s0)), 0), nx - 2)
            k = min(max(int(math.floor(s1)), 0), ny - 2)
            f = min(max(s0 - j, 0.0), 1.0)
            g = min(max(s1 - k, 0.0), 1.0)
            for c in range(C):
                out[r, i, c] = ((1.0 - f) * (1.0 - g) * values[r, j, k, c]
                                + f * (1.0 - g) * values[r, j + 1, k, c]
                                + (1.0 - f) * g * values[r, j, k + 1, c]
                                + f * g * values[r, j + 1, k + 1, c])
    return out
