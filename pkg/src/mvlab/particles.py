"""Euler-Maruyama simulation of the smoothed n-particle system with common noise.

Replications are simulated together as a batch of shape ``(R, n, d)``.  Each
replication owns its random streams (see :mod:`mvlab.rng`), so results do
not depend on how replications are grouped into batches.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from mvlab import rng
from mvlab.coeffs import CoefficientSet
from mvlab.errors import BlowupError, ConfigError, InputError
from mvlab.measures import EmpiricalMeasure
from mvlab.mollify import MollifierSpec, smoothed_drift_at

# particles per batch; the batch size depends only on the config, so output
# never depends on scheduling
BATCH_PARTICLES = 1 << 17


class InitLaw:
    """Initial law: a sampler driven by counter-based normals/uniforms plus a density."""

    d: int = 1

    def sample(self, seed: int, rep_ids, stream_ids) -> np.ndarray:
        raise NotImplementedError

    def density(self, y) -> np.ndarray:
        raise NotImplementedError

    @property
    def variance(self) -> float:
        """Per-axis variance."""
        raise NotImplementedError


@dataclass(frozen=True)
class GaussianLaw(InitLaw):
    mean: float = 0.0
    std: float = 1.0
    d: int = 1

    def __post_init__(self):
        if not self.std > 0:
            raise ConfigError("Gaussian initial law needs std > 0")

    def sample(self, seed, rep_ids, stream_ids):
        z = rng.normals(seed, rep_ids, stream_ids, rng.INIT, 0, self.d)
        return self.mean + self.std * z

    def density(self, y):
        y = np.asarray(y, dtype=np.float64)
        r2 = np.sum(((y - self.mean) / self.std) ** 2, axis=-1)
        return np.exp(-0.5 * r2) / (math.sqrt(2 * math.pi) * self.std) ** self.d

    @property
    def variance(self):
        return self.std ** 2


@dataclass(frozen=True)
class UniformLaw(InitLaw):
    lo: float = -1.0
    hi: float = 1.0
    d: int = 1

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ConfigError("uniform initial law needs hi > lo")

    def sample(self, seed, rep_ids, stream_ids):
        u = rng.uniforms(seed, rep_ids, stream_ids, rng.INIT, 0, self.d)
        return self.lo + (self.hi - self.lo) * u

    def density(self, y):
        y = np.asarray(y, dtype=np.float64)
        inside = np.all((y >= self.lo) & (y <= self.hi), axis=-1)
        return inside / (self.hi - self.lo) ** self.d

    @property
    def variance(self):
        return (self.hi - self.lo) ** 2 / 12


@dataclass(frozen=True)
class PointLaw(InitLaw):
    """A point mass (no density); useful for degenerate starts."""

    at: float = 0.0
    d: int = 1

    def sample(self, seed, rep_ids, stream_ids):
        return np.full((len(np.atleast_1d(rep_ids)), len(np.atleast_1d(stream_ids)), self.d),
                       float(self.at))

    def density(self, y):
        raise InputError("a point mass has no density")

    @property
    def variance(self):
        return 0.0


@dataclass
class SimConfig:
    """Simulation parameters.  ``delta=None`` runs the unsmoothed drift."""

    coeffs: CoefficientSet
    init: InitLaw
    n: int
    T: float = 1.0
    dt: float = 1e-2
    delta: float | None = 0.25
    seed: int = 0
    replications: int = 1
    drift_mode: str = "grid"
    chunk: int | None = None

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ConfigError("T must be positive")
        if not (0 < self.dt <= self.T):
            raise ConfigError("need 0 < dt <= T")
        steps = round(self.T / self.dt)
        if abs(steps * self.dt - self.T) > 1e-9 * self.T:
            raise ConfigError("dt must divide T")
        if self.chunk is None:
            self.chunk = max(1, BATCH_PARTICLES // max(1, self.n))
        if self.n < 1 or self.replications < 1 or self.chunk < 1:
            raise ConfigError("n, replications and chunk must be >= 1")
        if self.init.d != self.coeffs.d:
            raise ConfigError("initial law dimension does not match coefficients")
        if self.drift_mode not in ("grid", "direct"):
            raise ConfigError(f"unknown drift mode {self.drift_mode!r}")
        if self.delta is not None:
            MollifierSpec(self.d, self.delta)
        rng._check_seed(self.seed)

    @property
    def d(self) -> int:
        return self.coeffs.d

    @property
    def m(self) -> int:
        return self.coeffs.m

    @property
    def steps(self) -> int:
        return round(self.T / self.dt)

    @property
    def spec(self) -> MollifierSpec | None:
        return None if self.delta is None else MollifierSpec(self.d, self.delta)


@dataclass
class ParticleEnsemble:
    """State of a batch of replications at time ``step * dt``."""

    positions: np.ndarray          # (R, n, d)
    step: int
    time: float
    common: np.ndarray             # (R, m) accumulated common noise
    rep_ids: np.ndarray
    stream_ids: np.ndarray

    @property
    def measure(self) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.positions)


def init_ensemble(cfg: SimConfig, rep_ids=None, stream_ids=None) -> ParticleEnsemble:
    rep_ids = np.arange(cfg.replications) if rep_ids is None else np.atleast_1d(rep_ids)
    stream_ids = np.arange(cfg.n) if stream_ids is None else np.atleast_1d(stream_ids)
    if stream_ids.size != cfg.n:
        raise ConfigError("need one stream id per particle")
    try:
        x = np.asarray(cfg.init.sample(cfg.seed, rep_ids, stream_ids), dtype=np.float64)
    except Exception as exc:
        raise ConfigError(f"initial sampler failed: {exc}") from exc
    if x.shape != (rep_ids.size, cfg.n, cfg.d) or not np.all(np.isfinite(x)):
        raise ConfigError("initial sampler returned a bad sample")
    return ParticleEnsemble(x, 0, 0.0, np.zeros((rep_ids.size, cfg.m)), rep_ids, stream_ids)


def drift_values(cfg: SimConfig, t: float, x: np.ndarray) -> np.ndarray:
    """``b^delta_t(X^i, mu^{n,delta})`` for every particle, ``(R, n, d)``."""
    drift = cfg.coeffs.drift
    if drift.is_zero:
        return np.zeros(x.shape)
    if cfg.delta is None:
        return drift(t, x, EmpiricalMeasure(x))
    return smoothed_drift_at(drift, t, x, x, cfg.spec, mode=cfg.drift_mode)


def noise_increments(cfg: SimConfig, ens: ParticleEnsemble):
    """Per-particle ``dB`` ``(R, n, d)`` and shared ``dZ`` ``(R, m)`` for the next step."""
    sq = math.sqrt(cfg.dt)
    dB = rng.normals(cfg.seed, ens.rep_ids, ens.stream_ids, rng.PARTICLE, ens.step, cfg.d) * sq
    dZ = rng.normals(cfg.seed, ens.rep_ids, [0], rng.COMMON, ens.step, cfg.m)[:, 0] * sq
    return dB, dZ


def euler_step(ens: ParticleEnsemble, cfg: SimConfig) -> ParticleEnsemble:
    co = cfg.coeffs
    x, t = ens.positions, ens.time
    dB, dZ = noise_increments(cfg, ens)
    mu = EmpiricalMeasure(x)
    new = x + drift_values(cfg, t, x) * cfg.dt
    if co.const_sigma:
        new += dB @ co.sigma.T
    else:
        new += np.einsum("rnij,rnj->rni", co.sigma_at(t, x, mu), dB)
    if co.const_sigma_bar:
        new += (dZ @ co.sigma_bar.T)[:, None, :]
    else:
        new += np.einsum("rnij,rj->rni", co.sigma_bar_at(t, x, mu), dZ)
    bad = ~np.all(np.isfinite(new), axis=-1)
    if bad.any():
        r, i = np.argwhere(bad)[0]
        raise BlowupError(f"particle {i} of replication {ens.rep_ids[r]} blew up at t={t}",
                          particle=int(i), rep_id=int(ens.rep_ids[r]), t=t)
    step = ens.step + 1
    return ParticleEnsemble(new, step, step * cfg.dt, ens.common + dZ, ens.rep_ids,
                            ens.stream_ids)


@dataclass
class MeasureFlow:
    """Empirical measures ``mu^n_t`` at the snapshot times of each replication."""

    times: np.ndarray              # (J+1,)
    positions: np.ndarray          # (R, J+1, n, d)
    rep_ids: np.ndarray
    common: np.ndarray             # (R, J+1, m)

    @property
    def n(self) -> int:
        return self.positions.shape[2]

    @property
    def d(self) -> int:
        return self.positions.shape[3]

    def snapshot(self, j: int) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.positions[:, j])

    def integrate(self, phi: Callable) -> np.ndarray:
        """``mu^n_t[phi]`` for every replication and snapshot, ``(R, J+1)``."""
        return phi(self.positions).mean(axis=2)

    @staticmethod
    def concat(parts: list["MeasureFlow"]) -> "MeasureFlow":
        return MeasureFlow(parts[0].times,
                           np.concatenate([p.positions for p in parts]),
                           np.concatenate([p.rep_ids for p in parts]),
                           np.concatenate([p.common for p in parts]))


@dataclass
class RawPaths:
    """Snapshot paths plus the running ``sup_t |X_t|`` over every step."""

    flow: MeasureFlow
    running_sup: np.ndarray        # (R, n)
    meta: dict = field(default_factory=dict)


def _simulate_chunk(cfg, rep_ids, stream_ids, stride, observer):
    ens = init_ensemble(cfg, rep_ids, stream_ids)
    snaps, commons, times = [ens.positions], [ens.common], [0.0]
    sup = np.linalg.norm(ens.positions, axis=-1)
    for j in range(cfg.steps):
        if observer is not None:
            observer(ens)
        ens = euler_step(ens, cfg)
        np.maximum(sup, np.linalg.norm(ens.positions, axis=-1), out=sup)
        if ens.step % stride == 0 or ens.step == cfg.steps:
            snaps.append(ens.positions)
            commons.append(ens.common)
            times.append(ens.time)
    if observer is not None:
        observer(ens)
    pos = np.stack(snaps, axis=1) if stride else None
    return MeasureFlow(np.array(times), pos, rep_ids, np.stack(commons, axis=1)), sup


def simulate(cfg: SimConfig, rep_ids=None, stride: int = 1, stream_ids=None,
             observer: Callable[[ParticleEnsemble], None] | None = None
             ) -> tuple[MeasureFlow, RawPaths]:
    """Run all replications; snapshots every ``stride`` steps plus the final time.

    ``observer(ens)`` is called at every grid time before the step, and once at
    the end, for each batch of replications.
    """
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    rep_ids = np.arange(cfg.replications) if rep_ids is None else np.atleast_1d(rep_ids)
    flows, sups = [], []
    for a in range(0, rep_ids.size, cfg.chunk):
        f, s = _simulate_chunk(cfg, rep_ids[a:a + cfg.chunk], stream_ids, stride, observer)
        flows.append(f)
        sups.append(s)
    flow = MeasureFlow.concat(flows)
    return flow, RawPaths(flow, np.concatenate(sups), {"seed": cfg.seed, "dt": cfg.dt})


@dataclass
class PathReport:
    sup_moment: float
    sup_moment_se: float
    escape_frequency: float
    escape_bound: float
    exchangeability: float
    q: float
    K: float
    eps: float


def path_diagnostics(paths: RawPaths, q: float = 2.0, K: float = 4.0,
                     eps: float = 0.1) -> PathReport:
    """Sup-moment estimate, mass-escape frequency with its Markov bound, and
    the W1 gap between the laws of particles 1 and 2 across replications."""
    from mvlab.coeffs import w1_distance_1d

    pos = paths.flow.positions
    if pos is None or pos.shape[0] == 0:
        raise InputError("path diagnostics need a non-empty ensemble")
    s = paths.running_sup[:, 0] ** q
    cq = float(s.mean())
    se = float(s.std(ddof=1) / math.sqrt(s.size)) if s.size > 1 else math.inf
    inside = np.all(np.abs(pos) <= K, axis=-1).mean(axis=2)
    freq = float(np.mean(np.any(inside < 1 - eps, axis=1)))
    bound = cq / (eps * K ** q) if eps > 0 else math.inf
    if pos.shape[2] >= 2 and pos.shape[3] == 1:
        exch = w1_distance_1d(pos[:, -1, 0, 0], pos[:, -1, 1, 0])
    else:
        exch = float(np.linalg.norm(pos[:, -1, 0].mean(0) - pos[:, -1, 1].mean(0))) \
            if pos.shape[2] >= 2 else 0.0
    return PathReport(cq, se, freq, bound, exch, q, K, eps)


def export_paths_csv(flow: MeasureFlow, path, particles: int | None = None) -> None:
    """Rows ``rep_id, t, particle_id, x_1..x_d``."""
    R, J, n, d = flow.positions.shape
    n = n if particles is None else min(n, particles)
    with open(path, "w", newline="") as fh:
        fh.write("rep_id,t,particle_id," + ",".join(f"x_{k + 1}" for k in range(d)) + "\n")
        for r in range(R):
            for j in range(J):
                for i in range(n):
                    xs = ",".join(repr(float(v)) for v in flow.positions[r, j, i])
                    fh.write(f"{int(flow.rep_ids[r])},{flow.times[j]!r},{i},{xs}\n")


def export_common_csv(flow: MeasureFlow, path) -> None:
    """Rows ``rep_id, t, z_1..z_m``."""
    R, J, m = flow.common.shape
    with open(path, "w", newline="") as fh:
        fh.write("rep_id,t," + ",".join(f"z_{k + 1}" for k in range(m)) + "\n")
        for r in range(R):
            for j in range(J):
                zs = ",".join(repr(float(v)) for v in flow.common[r, j])
                fh.write(f"{int(flow.rep_ids[r])},{flow.times[j]!r},{zs}\n")
