"""Counter-based, splittable random streams.

A draw is a pure function of ``(seed, rep_id, stream_id, tag, step, block)``:
the Philox4x64-10 key is ``(seed, rep_id)`` and the counter is
``(step, stream_id, block, tag)``.  Nothing is stateful, so any schedule of
replications, particles or time steps reproduces the same numbers.
"""
from __future__ import annotations

import numpy as np

from mvlab import kernels

PARTICLE = 0
COMMON = 1
INIT = 2

_U64 = (1 << 64) - 1


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= _U64:
        raise ValueError(f"seed must fit in 64 bits, got {seed}")
    return seed


def normals(seed, rep_ids, stream_ids, tag, step, dim) -> np.ndarray:
    """Standard normals of shape ``(len(rep_ids), len(stream_ids), dim)``."""
    return kernels.philox_normals(_check_seed(seed), np.atleast_1d(rep_ids),
                                  np.atleast_1d(stream_ids), tag, step, dim)


def uniforms(seed, rep_ids, stream_ids, tag, step, count) -> np.ndarray:
    """Uniforms on the open interval (0, 1), shape ``(R, S, count)``."""
    return kernels.philox_uniforms(_check_seed(seed), np.atleast_1d(rep_ids),
                                   np.atleast_1d(stream_ids), tag, step, count)
