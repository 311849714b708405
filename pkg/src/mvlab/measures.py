"""Measure representations passed to coefficient callables.

All measures are *batched*: atoms have shape ``(R, n, d)`` and query points
``(R, q, d)``, one measure per leading index.  Single measures are the
``R == 1`` case; :func:`as_batch` lifts ``(n, d)`` input.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from mvlab import kernels
from mvlab.errors import DensityRequiredError, InputError


def as_batch(points, d: int | None = None) -> np.ndarray:
    """Return points as a float array of shape ``(R, n, d)``."""
    a = np.asarray(points, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1, 1) if d in (None, 1) else a.reshape(1, 1, -1)
    elif a.ndim == 2:
        a = a[None]
    if a.ndim != 3:
        raise InputError(f"expected points of shape (R, n, d), got {a.shape}")
    if d is not None and a.shape[-1] != d:
        raise InputError(f"points have dimension {a.shape[-1]}, expected {d}")
    return a


class EmpiricalMeasure:
    """(Weighted) atomic probability measure(s) ``sum_i w_i delta_{X_i}``.

    ``density_source`` optionally attaches a density estimate, which is what a
    Nemytskii drift needs when evaluated without smoothing.
    """

    def __init__(self, atoms, weights=None,
                 density_source: Callable[[np.ndarray], np.ndarray] | None = None):
        self.atoms = as_batch(atoms)
        if self.atoms.shape[1] == 0:
            raise InputError("empirical measure needs at least one atom")
        if weights is None:
            self.weights = None
        else:
            w = np.asarray(weights, dtype=np.float64)
            if w.shape != (self.atoms.shape[1],) or np.any(w < 0):
                raise InputError("weights must be nonnegative with one entry per atom")
            self.weights = w / w.sum()
        self.density_source = density_source

    @property
    def n(self) -> int:
        return self.atoms.shape[1]

    @property
    def d(self) -> int:
        return self.atoms.shape[2]

    @property
    def batch_size(self) -> int:
        return self.atoms.shape[0]

    def integrate(self, values) -> np.ndarray:
        """``lambda[f]`` from per-atom values of shape ``(R, n, ...)``."""
        values = np.asarray(values, dtype=np.float64)
        if self.weights is None:
            return values.mean(axis=1)
        return np.tensordot(self.weights, values, axes=([0], [1]))

    def density(self, y) -> np.ndarray:
        if self.density_source is None:
            raise DensityRequiredError(
                "density required: this drift is only defined for measures with a "
                "Lebesgue density, and an atomic measure has none")
        return self.density_source(as_batch(y, self.d))

    def with_density(self, source) -> "EmpiricalMeasure":
        return EmpiricalMeasure(self.atoms, self.weights, source)


@dataclass
class GridMeasure:
    """Density values on a per-replication uniform grid.

    ``lo`` is ``(R, d)``; node ``j`` of replication ``r`` sits at
    ``lo[r] + j * dx``.  ``extent[r]`` is the number of meaningful nodes per
    axis for replication ``r`` (nodes beyond it are padding).
    """

    lo: np.ndarray
    dx: float
    values: np.ndarray
    extent: np.ndarray
    atoms: np.ndarray | None = None

    @property
    def d(self) -> int:
        return self.lo.shape[1]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape[1:]

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``(R, *shape, d)``."""
        axes = [np.arange(s) * self.dx for s in self.shape]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return self.lo.reshape((-1,) + (1,) * self.d + (self.d,)) + mesh

    def density(self, y) -> np.ndarray:
        y = as_batch(y, self.d)
        if self.d == 1:
            return kernels.interp_1d(self.values[..., None], self.lo[:, 0], self.dx,
                                     y[..., 0])[..., 0]
        if self.d == 2:
            return kernels.interp_2d(self.values[..., None], self.lo, self.dx, y)[..., 0]
        raise InputError("grid measures are implemented for d <= 2")
