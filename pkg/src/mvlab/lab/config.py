"""Scenario configuration files (TOML) and their validation.

Example::

    name = "arctan"
    d = 1
    m = 1
    T = 1.0
    dt = 0.01
    seed = 7
    replications = 50
    n_ladder = [128, 256, 512, 1024]
    delta_ladder = [0.5, 0.25, 0.125]

    [coefficients]
    drift = "nemytskii_arctan"
    sigma = 1.0
    sigma_bar = 0.5

    [init]
    law = "gaussian"
    std = 0.1

    [[test_functions]]
    family = "gaussian"
    width = 1.0

    [diagnostics]
    martingale = true
"""
from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from mvlab.errors import ConfigError
from mvlab.lab import registry


@dataclass(frozen=True)
class Diagnostics:
    paths: bool = True
    martingale: bool = True
    qv: bool = True
    regularity: bool = True
    distances: bool = True
    export_raw: bool = True
    common_noise: bool = False
    svg: bool = True
    raw_particles: int = 16
    mg_s: float = 0.25
    mg_t: float = 0.75
    reg_r: float = 2.0
    reg_q: float = 2.0
    dist_p: float = 2.0
    dist_xi: float = 1.0
    sup_xi: float = 1.5
    t0: float = 0.1
    grid_L: float = 8.0
    grid_resolution: int = 512
    bandwidth: float | None = None
    stride: int = 1


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    d: int
    m: int
    T: float
    dt: float
    n_ladder: tuple[int, ...]
    delta_ladder: tuple[float, ...]
    coefficients: dict
    init: dict
    test_functions: tuple[dict, ...]
    diagnostics: Diagnostics = field(default_factory=Diagnostics)
    seed: int = 0
    replications: int = 20
    out: str = "out"
    drift_mode: str = "grid"

    def __post_init__(self):
        if not self.name or any(c in self.name for c in "/\\ "):
            raise ConfigError("name must be non-empty without spaces or slashes")
        if self.d not in (1, 2) or self.m < 1:
            raise ConfigError("d must be 1 or 2 and m >= 1")
        if not (self.T > 0 and 0 < self.dt <= self.T):
            raise ConfigError("need T > 0 and 0 < dt <= T")
        steps = round(self.T / self.dt)
        if abs(steps * self.dt - self.T) > 1e-12 * max(1.0, self.T):
            raise ConfigError("dt must divide T")
        ns, ds = self.n_ladder, self.delta_ladder
        if not ns or any(n < 1 for n in ns) or any(b <= a for a, b in zip(ns, ns[1:])):
            raise ConfigError("n_ladder must be positive and strictly increasing")
        if not ds or any(not (x > 0 and math.isfinite(x)) for x in ds) or \
                any(b >= a for a, b in zip(ds, ds[1:])):
            raise ConfigError("delta_ladder must be positive and strictly decreasing")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must fit in 64 bits")
        if self.drift_mode not in ("grid", "direct"):
            raise ConfigError("drift_mode must be 'grid' or 'direct'")
        dg = self.diagnostics
        if dg.martingale and not (0 <= dg.mg_s < dg.mg_t <= self.T):
            raise ConfigError("need 0 <= mg_s < mg_t <= T")
        for name in ("mg_s", "mg_t") if dg.martingale else ():
            v = getattr(dg, name) / self.dt
            if abs(v - round(v)) > 1e-9:
                raise ConfigError(f"{name} must be a multiple of dt")
        if dg.stride < 1 or dg.raw_particles < 0:
            raise ConfigError("stride must be >= 1 and raw_particles >= 0")
        # building the objects validates names and parameters
        self.build_coefficients()
        self.build_init()
        self.build_test_functions()

    def build_coefficients(self):
        c = dict(self.coefficients)
        drift = c.pop("drift", "zero")
        params = c.pop("params", None)
        try:
            return registry.make_coefficients(drift, self.d, self.m, drift_params=params, **c)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad coefficients: {exc}") from exc

    def build_init(self):
        return registry.make_init(self.init, self.d)

    def build_test_functions(self):
        return [registry.make_test_function(s, self.d) for s in self.test_functions]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_ladder"] = list(self.n_ladder)
        d["delta_ladder"] = list(self.delta_ladder)
        d["test_functions"] = [dict(s) for s in self.test_functions]
        return d

    def digest(self) -> str:
        """sha256 of the canonical JSON form (output directory excluded)."""
        d = self.to_dict()
        d.pop("out")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, seed: int | None = None, out: str | None = None
                       ) -> "ScenarioConfig":
        kw = {}
        if seed is not None:
            kw["seed"] = int(seed)
        if out is not None:
            kw["out"] = str(out)
        return replace(self, **kw) if kw else self


_TOP = {"name", "d", "m", "T", "dt", "n_ladder", "delta_ladder", "coefficients", "init",
        "test_functions", "diagnostics", "seed", "replications", "out", "drift_mode"}


def config_from_dict(raw: dict) -> ScenarioConfig:
    unknown = set(raw) - _TOP
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        diag = Diagnostics(**raw.get("diagnostics", {}))
    except TypeError as exc:
        raise ConfigError(f"bad diagnostics section: {exc}") from exc
    try:
        return ScenarioConfig(
            name=str(raw["name"]), d=int(raw.get("d", 1)), m=int(raw.get("m", 1)),
            T=float(raw.get("T", 1.0)), dt=float(raw["dt"]),
            n_ladder=tuple(int(n) for n in raw["n_ladder"]),
            delta_ladder=tuple(float(x) for x in raw["delta_ladder"]),
            coefficients=dict(raw.get("coefficients", {})),
            init=dict(raw.get("init", {"law": "gaussian"})),
            test_functions=tuple(dict(s) for s in raw.get(
                "test_functions", [{"family": "gaussian", "width": 1.0}])),
            diagnostics=diag, seed=int(raw.get("seed", 0)),
            replications=int(raw.get("replications", 20)), out=str(raw.get("out", "out")),
            drift_mode=str(raw.get("drift_mode", "grid")))
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config value: {exc}") from exc


def load_config(path) -> ScenarioConfig:
    try:
        raw = tomllib.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {path} is not valid TOML: {exc}") from exc
    return config_from_dict(raw)
