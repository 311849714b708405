"""Hot numeric kernels with a numba path and a numpy fallback.

Every public function here forwards to ``_nb`` or ``_np`` depending on
:func:`mvlab._backend.use_numba`.  Inputs are normalized (dtype, contiguity)
before dispatch so both paths see identical arrays.
"""
from __future__ import annotations

import numpy as np

from mvlab import _backend
from mvlab.kernels import _np

__all__ = [
    "philox_block", "philox_uniforms", "philox_normals",
    "kde_grid_1d", "kde_grid_2d", "kde_points",
    "conv_same_1d", "conv_same_2d", "interp_1d", "interp_2d",
]


def _impl():
    if _backend.use_numba():
        from mvlab.kernels import _nb
        return _nb
    return _np


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _u64(a):
    return np.ascontiguousarray(a, dtype=np.uint64)


def philox_block(ctr, key):
    """Raw Philox4x64-10 output for rows of counters ``(N, 4)`` and keys ``(N, 2)``."""
    return _impl().philox_block(_u64(ctr), _u64(key))


def philox_uniforms(seed, rep_ids, stream_ids, tag, step, count):
    return _impl().philox_uniforms(np.uint64(seed), _u64(rep_ids), _u64(stream_ids),
                                   np.uint64(tag), np.uint64(step), int(count))


def philox_normals(seed, rep_ids, stream_ids, tag, step, dim):
    return _impl().philox_normals(np.uint64(seed), _u64(rep_ids), _u64(stream_ids),
                                  np.uint64(tag), np.uint64(step), int(dim))


def kde_grid_1d(points, lo, dx, nx, delta, norm):
    return _impl().kde_grid_1d(_f64(points), _f64(lo), float(dx), int(nx),
                               float(delta), float(norm))


def kde_grid_2d(points, lo, dx, nx, ny, delta, norm):
    return _impl().kde_grid_2d(_f64(points), _f64(lo), float(dx), int(nx), int(ny),
                               float(delta), float(norm))


def kde_points(points, queries, delta, norm):
    return _impl().kde_points(_f64(points), _f64(queries), float(delta), float(norm))


def conv_same_1d(values, taps):
    return _impl().conv_same_1d(_f64(values), _f64(taps))


def conv_same_2d(values, taps):
    return _impl().conv_same_2d(_f64(values), _f64(taps))


def interp_1d(values, lo, dx, pts):
    return _impl().interp_1d(_f64(values), _f64(lo), float(dx), _f64(pts))


def interp_2d(values, lo, dx, pts):
    return _impl().interp_2d(_f64(values), _f64(lo), float(dx), _f64(pts))
