"""Densities on a cell-centred grid over ``[-L, L]^d`` and Bessel potential norms."""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from mvlab.errors import GridError, InputError, PeriodizationError

BOUNDARY_TOL = 1e-8
_HEADER = struct.Struct("<qdq")


@dataclass(frozen=True)
class DensityGrid:
    """Nonnegative values at the ``resolution**d`` cell centres of ``[-L, L]^d``."""

    d: int
    L: float
    resolution: int
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if self.d < 1 or self.L <= 0 or self.resolution < 2:
            raise GridError("need d >= 1, L > 0 and resolution >= 2")
        if v.shape != (self.resolution,) * self.d:
            raise GridError(f"values have shape {v.shape}, expected "
                            f"{(self.resolution,) * self.d}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise GridError("density values must be finite and nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dx(self) -> float:
        return 2 * self.L / self.resolution

    @property
    def cell(self) -> float:
        return self.dx ** self.d

    def axis(self) -> np.ndarray:
        return -self.L + (np.arange(self.resolution) + 0.5) * self.dx

    def points(self) -> np.ndarray:
        ax = self.axis()
        return np.stack(np.meshgrid(*([ax] * self.d), indexing="ij"), axis=-1)

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.cell)

    def lr_norm(self, r: float) -> float:
        if r == np.inf:
            return float(self.values.max())
        return float((np.sum(self.values ** r) * self.cell) ** (1.0 / r))

    @classmethod
    def from_function(cls, f, d: int, L: float, resolution: int) -> "DensityGrid":
        probe = cls(d, L, resolution, np.zeros((resolution,) * d))
        return cls(d, L, resolution, np.asarray(f(probe.points()), dtype=np.float64))

    def boundary_max(self) -> float:
        v = self.values
        edges = []
        for a in range(self.d):
            edges.append(np.take(v, 0, axis=a).max())
            edges.append(np.take(v, -1, axis=a).max())
        return float(max(edges))

    # -- I/O ---------------------------------------------------------------
    def to_csv(self, path) -> None:
        """First row: x coordinates; then the values (one row in 1-D, one row
        per first-axis index in 2-D)."""
        if self.d > 2:
            raise InputError("CSV export supports d <= 2")
        buf = io.StringIO()
        buf.write(",".join(repr(float(x)) for x in self.axis()) + "\n")
        rows = self.values[None] if self.d == 1 else self.values
        for row in rows:
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        Path(path).write_text(buf.getvalue())

    @classmethod
    def from_csv(cls, path) -> "DensityGrid":
        lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
        x = np.array([float(s) for s in lines[0].split(",")])
        rows = np.array([[float(s) for s in ln.split(",")] for ln in lines[1:]])
        res = x.size
        dx = x[1] - x[0]
        L = float(-(x[0] - dx / 2))
        if rows.shape == (1, res):
            return cls(1, L, res, rows[0])
        if rows.shape == (res, res):
            return cls(2, L, res, rows)
        raise GridError(f"CSV body of shape {rows.shape} does not match {res} columns")

    def to_bytes(self) -> bytes:
        return _HEADER.pack(self.d, self.L, self.resolution) + \
            self.values.astype("<f8").tobytes(order="C")

    @classmethod
    def from_bytes(cls, data: bytes) -> "DensityGrid":
        d, L, res = _HEADER.unpack_from(data)
        body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
        if body.size != res ** d:
            raise GridError("binary payload size does not match its header")
        return cls(int(d), float(L), int(res), body.reshape((res,) * d))

    def to_binary(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_binary(cls, path) -> "DensityGrid":
        return cls.from_bytes(Path(path).read_bytes())


def bessel_potential(grid: DensityGrid, w: float) -> np.ndarray:
    """``F^{-1}[(1 + |xi|^2)^(w/2) F f]`` on the periodic box (angular frequencies)."""
    if grid.boundary_max() > BOUNDARY_TOL:
        raise PeriodizationError(f"density reaches {grid.boundary_max():.2e} at the box "
                                 f"boundary; enlarge L")
    if w == 0:
        return np.array(grid.values)
    xi = 2 * np.pi * np.fft.fftfreq(grid.resolution, grid.dx)
    sq = np.zeros((grid.resolution,) * grid.d)
    for a in range(grid.d):
        shape = [1] * grid.d
        shape[a] = -1
        sq = sq + (xi ** 2).reshape(shape)
    mult = (1 + sq) ** (0.5 * w)
    return np.real(np.fft.ifftn(mult * np.fft.fftn(grid.values)))


def bessel_norm(grid: DensityGrid, w: float, r: float) -> float:
    """Discrete ``L^r`` norm of the Bessel potential of order ``w``."""
    if not r > 1:
        raise InputError("need r > 1")
    Jf = bessel_potential(grid, w)
    return float((np.sum(np.abs(Jf) ** r) * grid.cell) ** (1.0 / r))
