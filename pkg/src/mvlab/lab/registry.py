"""Named coefficient, initial-law and test-function builders for config files.

Everything here is reconstructed from plain (name, params) data, so scenario
configs stay picklable across worker processes.
"""
from __future__ import annotations

import math

import numpy as np

from mvlab import coeffs as C
from mvlab.errors import ConfigError
from mvlab.particles import GaussianLaw, InitLaw, PointLaw, UniformLaw
from mvlab.spectral import TestFunction, compact_bump, gaussian_bump, hermite


def _direction(d: int) -> np.ndarray:
    return np.ones(d) / math.sqrt(d)


def _nemytskii_arctan(d, scale=1.0):
    e = _direction(d)
    return C.make_nemytskii_drift(
        lambda t, y, rho: scale * np.arctan(rho)[..., None] * e,
        abs(scale) * math.pi / 2, d, "B(x, rho) = arctan(rho) along (1,..,1)/sqrt(d)")


def _nemytskii_capped(d, cap=1.0):
    e = _direction(d)
    return C.make_nemytskii_drift(
        lambda t, y, rho: np.minimum(rho, cap)[..., None] * e, cap, d,
        "B(x, rho) = min(rho, cap) along (1,..,1)/sqrt(d)")


def _conv_sign(d, strength=1.0, radius=1.0):
    def k(t, y):
        r = np.linalg.norm(y, axis=-1, keepdims=True)
        unit = np.where(r > 0, y / np.where(r > 0, r, 1.0), 0.0)
        return -strength * unit * (r <= radius)
    return C.make_convolution_drift(k, abs(strength), d,
                                    "k(y) = -strength * y/|y| on |y| <= radius")


def _conv_gaussian(d, strength=1.0, length=1.0):
    def k(t, y):
        r2 = np.sum(y * y, axis=-1, keepdims=True)
        return -strength * y / length * np.exp(-0.5 * r2 / length ** 2)
    return C.make_convolution_drift(k, abs(strength) * math.exp(-0.5), d,
                                    "k(y) = -strength * y/l * exp(-|y|^2 / 2 l^2)")


def _zero(d):
    return C.zero_drift(d)


def _constant(d, value=1.0):
    return C.constant_drift(value, d)


DRIFTS = {
    "zero": _zero,
    "constant": _constant,
    "nemytskii_arctan": _nemytskii_arctan,
    "nemytskii_capped": _nemytskii_capped,
    "conv_sign": _conv_sign,
    "conv_gaussian": _conv_gaussian,
}


def make_drift(name: str, d: int, params: dict | None = None) -> C.DriftSpec:
    if name not in DRIFTS:
        raise ConfigError(f"unknown drift {name!r}; choose from {sorted(DRIFTS)}")
    try:
        return DRIFTS[name](d, **(params or {}))
    except TypeError as exc:
        raise ConfigError(f"bad parameters for drift {name!r}: {exc}") from exc


def _matrix(value, rows: int, cols: int, what: str) -> np.ndarray:
    a = np.asarray(value, dtype=np.float64)
    if a.ndim == 0:
        return float(a) * np.eye(rows, cols)
    if a.shape != (rows, cols):
        raise ConfigError(f"{what} must be a scalar or a {rows}x{cols} matrix")
    return a


def make_coefficients(drift: str, d: int, m: int, sigma=1.0, sigma_bar=0.0,
                      drift_params: dict | None = None, kappa: float | None = None,
                      beta: float = 1.0, hoelder_C: float = 1.0,
                      test_mode: bool = False) -> C.CoefficientSet:
    s = _matrix(sigma, d, d, "sigma")
    sb = _matrix(sigma_bar, d, m, "sigma_bar")
    if kappa is None:
        lam = float(np.linalg.eigvalsh(s @ s.T).min())
        kappa = lam if lam > 0 else 1.0
    return C.CoefficientSet(make_drift(drift, d, drift_params), s, sb, d, m, kappa=kappa,
                            beta=beta, hoelder_C=hoelder_C, test_mode=test_mode)


def make_init(spec: dict, d: int) -> InitLaw:
    spec = dict(spec)
    law = spec.pop("law", "gaussian")
    try:
        if law == "gaussian":
            return GaussianLaw(d=d, **spec)
        if law == "uniform":
            return UniformLaw(d=d, **spec)
        if law == "point":
            return PointLaw(d=d, **spec)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for initial law {law!r}: {exc}") from exc
    raise ConfigError(f"unknown initial law {law!r}")


def make_test_function(spec: dict, d: int) -> TestFunction:
    spec = dict(spec)
    fam = spec.pop("family", None)
    try:
        if fam == "hermite":
            k = spec.pop("k")
            return hermite(k if d > 1 or np.ndim(k) else int(k))
        if fam == "gaussian":
            return gaussian_bump(spec.get("center", 0.0), spec.get("width", 1.0), d)
        if fam == "bump":
            return compact_bump(spec.get("center", 0.0), spec.get("radius", 1.0), d)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad test function {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown test-function family {fam!r}")
