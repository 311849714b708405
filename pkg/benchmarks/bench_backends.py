"""Compare the numba kernels with their numpy twins.

Usage::

    python3 benchmarks/bench_backends.py [--repeat 5] [--quick] [--json out.json]

Each case is run once per backend to warm up (numba compiles on first call),
then timed ``--repeat`` times; the best time is reported.  Results of the two
backends are also compared so a speedup never hides a wrong answer.
"""
from __future__ import annotations

import argparse
import json
import time

import numpy as np

from mvlab import _backend, kernels
from mvlab.coeffs import CoefficientSet
from mvlab.lab.registry import make_drift
from mvlab.mollify import norm_const
from mvlab.particles import GaussianLaw, SimConfig, simulate


def _cases(quick: bool):
    rng = np.random.default_rng(0)
    R, n = (4, 256) if quick else (16, 1024)
    pts = rng.normal(size=(R, n))
    pts2 = rng.normal(size=(R, n, 2))
    grid = rng.random((R, 512, 1))
    taps = np.hanning(33)
    q = rng.normal(size=(R, n, 1))
    c1, c2 = norm_const(1), norm_const(2)
    co = CoefficientSet(make_drift("nemytskii_arctan", 1), 1.0, 0.5)
    sim = SimConfig(co, GaussianLaw(), n=n, T=0.1 if quick else 0.2, dt=0.01,
                    replications=R, delta=0.25)
    lo = np.full(R, -4.0)
    return {
        "philox_normals": lambda: kernels.philox_normals(7, np.arange(R), np.arange(n), 0, 3, 2),
        "kde_grid_1d": lambda: kernels.kde_grid_1d(pts, lo, 8 / 512, 512, 0.2, c1),
        "kde_grid_2d": lambda: kernels.kde_grid_2d(pts2, np.full((R, 2), -4.0), 8 / 128,
                                                   128, 128, 0.3, c2),
        "kde_points": lambda: kernels.kde_points(pts[..., None], q, 0.2, c1),
        "conv_same_1d": lambda: kernels.conv_same_1d(grid, taps),
        "interp_1d": lambda: kernels.interp_1d(grid, lo, 8 / 512, pts),
        "simulate": lambda: simulate(sim)[0].positions,
    }


def _best(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def run(repeat: int = 5, quick: bool = False) -> list[dict]:
    if not _backend.numba_available():
        raise SystemExit("numba is not installed; nothing to compare")
    before = _backend.backend_name()
    rows = []
    try:
        for name, fn in _cases(quick).items():
            out, secs = {}, {}
            for b in ("numba", "numpy"):
                _backend.set_backend(b)
                out[b] = np.asarray(fn())
                secs[b] = _best(fn, repeat)
            rows.append({"case": name, "numba_s": secs["numba"], "numpy_s": secs["numpy"],
                         "speedup": secs["numpy"] / secs["numba"],
                         "max_abs_diff": float(np.max(np.abs(out["numba"] - out["numpy"])))})
    finally:
        _backend.set_backend(before)
    return rows


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--quick", action="store_true", help="small sizes, for smoke runs")
    p.add_argument("--json", default=None, help="also write the rows as JSON")
    args = p.parse_args(argv)
    rows = run(args.repeat, args.quick)
    print(f"{'case':<16}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>9}{'max diff':>11}")
    for r in rows:
        print(f"{r['case']:<16}{1e3 * r['numba_s']:>12.2f}{1e3 * r['numpy_s']:>12.2f}"
              f"{r['speedup']:>9.1f}{r['max_abs_diff']:>11.1e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)


if __name__ == "__main__":
    main()
