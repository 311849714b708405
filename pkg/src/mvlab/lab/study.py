"""The two-step study: n-ladder at each delta, then the delta-ladder at the largest n.

Work is split into units (one cell = one (delta, n) pair, further split into
fixed replication batches).  Units may run in worker processes; results are
reassembled in a fixed order, so output does not depend on ``jobs``.
"""
from __future__ import annotations

import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from mvlab import __version__
from mvlab.errors import MvlabError
from mvlab.lab.config import ScenarioConfig, config_from_dict
from mvlab.mgdiag import ResidualAccumulator, martingale_test, qv_test, tanh_functional
from mvlab.mollify import norm_const
from mvlab.particles import MeasureFlow, RawPaths, SimConfig, path_diagnostics, simulate
from mvlab.regularity import (
    density_flow,
    flow_distance,
    lr_curve,
    silverman_bandwidth,
)

HEADER = ("Finite-ladder Cauchy-trend diagnostics: limits along n and delta are not "
          "computable, so successive-ladder distances stand in for them.")


@dataclass
class Cell:
    k: int
    delta: float
    n: int
    status: str = "ok"
    error: str = ""
    flow: MeasureFlow | None = None
    raw: RawPaths | None = None
    residuals: list = field(default_factory=list)
    unsmoothed: list = field(default_factory=list)


@dataclass
class StudyReport:
    """Tables are lists of row dicts; every row carries n, k, reps and seed."""

    config: ScenarioConfig
    cells: dict
    tables: dict
    provenance: dict

    @property
    def failures(self) -> int:
        return sum(c.status != "ok" for c in self.cells.values())


def study_bandwidth(cfg: ScenarioConfig) -> float:
    """One KDE bandwidth for the whole study, so all flows share a kernel."""
    if cfg.diagnostics.bandwidth:
        return float(cfg.diagnostics.bandwidth)
    var = cfg.build_init().variance
    return silverman_bandwidth(max(cfg.n_ladder), cfg.d, math.sqrt(var) if var > 0 else 1.0)


def sim_config(cfg: ScenarioConfig, delta: float, n: int) -> SimConfig:
    return SimConfig(cfg.build_coefficients(), cfg.build_init(), n=n, T=cfg.T, dt=cfg.dt,
                     delta=delta, seed=cfg.seed, replications=cfg.replications,
                     drift_mode=cfg.drift_mode)


def _kde_density_source(bandwidth: float, d: int):
    from mvlab import kernels

    def attach(x):
        return lambda y: kernels.kde_points(x, np.broadcast_to(y, (x.shape[0],) + y.shape[1:]),
                                            bandwidth, norm_const(d))
    return attach


class _UnsmoothedAccumulator(ResidualAccumulator):
    """Compensator with the raw drift; Nemytskii drifts read a KDE density."""

    def __init__(self, *args, bandwidth: float, **kw):
        super().__init__(*args, **kw)
        self._attach = _kde_density_source(bandwidth, self.coeffs.d)

    def observe(self, x, t, step, rep_ids):
        from mvlab.measures import EmpiricalMeasure
        from mvlab.mgdiag import _terms_from

        rows = np.array([self._row[int(r)] for r in np.atleast_1d(rep_ids)])
        lam = EmpiricalMeasure(x).with_density(self._attach(x))
        drift = self.coeffs.drift
        b = np.zeros(x.shape) if drift.is_zero else drift(t, x, lam)
        for j, phi in enumerate(self.phis):
            gen, common, own = _terms_from(self.coeffs, t, x, lam, b, phi)
            self.lam[j, rows, step] = phi(x).mean(axis=1)
            self.gen_mean[j, rows, step] = gen.mean(axis=1)
            self.qv_rate[j, rows, step] = (np.sum(common.mean(axis=1) ** 2, axis=-1)
                                           + np.sum(own * own, axis=-1).mean(axis=1) / self.n)


class _Both:
    def __init__(self, *accs):
        self.accs = [a for a in accs if a is not None]

    def __call__(self, ens):
        for a in self.accs:
            a(ens)


def _run_unit(payload: dict) -> dict:
    """Simulate one batch of one cell; returns plain arrays (picklable)."""
    cfg = config_from_dict(payload["config"])
    delta, n, rep_ids = payload["delta"], payload["n"], np.asarray(payload["rep_ids"])
    try:
        sc = sim_config(cfg, delta, n)
        phis = cfg.build_test_functions()
        dg = cfg.diagnostics
        acc = uns = None
        if dg.martingale or dg.qv:
            acc = ResidualAccumulator(sc.coeffs, delta, phis, rep_ids, sc.steps, sc.dt, n,
                                      sc.drift_mode)
            if payload["unsmoothed"]:
                uns = _UnsmoothedAccumulator(sc.coeffs, None, phis, rep_ids, sc.steps, sc.dt,
                                             n, sc.drift_mode,
                                             bandwidth=payload["bandwidth"])
        obs = _Both(acc, uns) if acc is not None else None
        flow, raw = simulate(sc, rep_ids=rep_ids, stride=dg.stride, observer=obs)
        out = {"ok": True, "times": flow.times, "positions": flow.positions,
               "common": flow.common, "sup": raw.running_sup}
        for key, a in (("acc", acc), ("uns", uns)):
            if a is not None:
                out[key] = (a.lam, a.gen_mean, a.qv_rate)
        return out
    except (MvlabError, ArithmeticError, ValueError) as exc:
        return {"ok": False, "error": f"{type(exc).__name__}: {exc}",
                "trace": traceback.format_exc(limit=3)}


def _units(cfg: ScenarioConfig, bandwidth: float):
    chunk_of = {}
    units = []
    cfg_dict = cfg.to_dict()
    finest = (len(cfg.delta_ladder) - 1, max(cfg.n_ladder))
    for k, delta in enumerate(cfg.delta_ladder):
        for n in cfg.n_ladder:
            chunk = sim_config(cfg, delta, n).chunk
            chunk_of[(k, n)] = chunk
            for a in range(0, cfg.replications, chunk):
                reps = list(range(a, min(cfg.replications, a + chunk)))
                units.append(((k, n), {"config": cfg_dict, "delta": delta, "n": n,
                                       "rep_ids": reps, "bandwidth": bandwidth,
                                       "unsmoothed": (k, n) == finest}))
    return units


def _assemble(cfg, key, parts, phis, dt, steps):
    k, n = key
    cell = Cell(k, cfg.delta_ladder[k], n)
    bad = [p for p in parts if not p["ok"]]
    if bad:
        cell.status, cell.error = "failed", bad[0]["error"]
        return cell
    rep_ids = np.arange(cfg.replications)
    flow = MeasureFlow(parts[0]["times"], np.concatenate([p["positions"] for p in parts]),
                       rep_ids, np.concatenate([p["common"] for p in parts]))
    cell.flow = flow
    cell.raw = RawPaths(flow, np.concatenate([p["sup"] for p in parts]),
                        {"seed": cfg.seed, "dt": dt})
    for key_, attr, delta in (("acc", "residuals", cell.delta), ("uns", "unsmoothed", None)):
        if key_ not in parts[0]:
            continue
        acc = ResidualAccumulator.__new__(ResidualAccumulator)
        acc.phis, acc.rep_ids, acc.dt, acc.n, acc.steps = phis, rep_ids, dt, n, steps
        acc.lam = np.concatenate([p[key_][0] for p in parts], axis=1)
        acc.gen_mean = np.concatenate([p[key_][1] for p in parts], axis=1)
        acc.qv_rate = np.concatenate([p[key_][2] for p in parts], axis=1)
        setattr(cell, attr, acc.series())
    return cell


def _row(cfg, cell, **kw):
    base = {"scenario": cfg.name, "n": cell.n, "k": cell.k, "delta": cell.delta,
            "reps": cfg.replications, "seed": cfg.seed}
    if "passed" in kw:
        kw["pass"] = kw.pop("passed")
    base.update(kw)
    return base


def _cell_table(cfg, cell):
    dg = cfg.diagnostics
    rows = []
    if cell.status != "ok":
        return [_row(cfg, cell, test_name="cell_failed", phi_id="", s="", t="", mean="",
                     se="", z="", passed=0, note=cell.error)]
    if dg.paths:
        pd = path_diagnostics(cell.raw, q=2.0, K=4.0, eps=0.1)
        rows.append(_row(cfg, cell, test_name="sup_moment", phi_id="", s=0.0, t=cfg.T,
                         mean=pd.sup_moment, se=pd.sup_moment_se, z="", passed=1,
                         note="q=2"))
        rows.append(_row(cfg, cell, test_name="mass_escape", phi_id="", s=0.0, t=cfg.T,
                         mean=pd.escape_frequency, se="", z="",
                         passed=int(pd.escape_frequency <= pd.escape_bound),
                         note=f"K=4 eps=0.1 bound={pd.escape_bound!r}"))
    for label, series in (("martingale", cell.residuals), ("martingale_unsmoothed",
                                                          cell.unsmoothed)):
        for s in series:
            if dg.martingale:
                r = martingale_test(s, dg.mg_s, dg.mg_t, tanh_functional(s), name=label)
                rows.append(_row(cfg, cell, test_name=r.test_name, phi_id=r.phi_id, s=r.s,
                                 t=r.t, mean=r.mean, se=r.se, z=r.z, passed=int(r.passed),
                                 note=""))
            if dg.qv and label == "martingale":
                r = qv_test(s, cell.n)
                rows.append(_row(cfg, cell, test_name="qv", phi_id=r.phi_id, s=r.s, t=r.t,
                                 mean=r.mean, se=r.se, z=r.z, passed=int(r.passed),
                                 note=f"predicted={r.extra['predicted']!r}"))
    return rows


def run_two_step_study(cfg: ScenarioConfig, jobs: int = 1) -> StudyReport:
    dg = cfg.diagnostics
    bw = study_bandwidth(cfg)
    units = _units(cfg, bw)
    payloads = [p for _, p in units]
    if jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_unit, payloads))
    else:
        results = [_run_unit(p) for p in payloads]
    grouped: dict = {}
    for (key, _), res in zip(units, results):
        grouped.setdefault(key, []).append(res)
    phis = cfg.build_test_functions()
    steps = round(cfg.T / cfg.dt)
    cells = {key: _assemble(cfg, key, parts, phis, cfg.dt, steps)
             for key, parts in grouped.items()}

    tables: dict = {}
    for key, cell in cells.items():
        rows = _cell_table(cfg, cell)
        if rows:
            tables[f"diag_{cfg.name}_n{cell.n}_k{cell.k}"] = rows

    flows = {}
    if dg.regularity or dg.distances:
        for key, cell in cells.items():
            if cell.status == "ok":
                try:
                    flows[key] = density_flow(cell.flow, dg.grid_L, dg.grid_resolution, bw)
                except MvlabError as exc:
                    cell.status, cell.error = "failed", f"{type(exc).__name__}: {exc}"

    nmax = max(cfg.n_ladder)
    if dg.regularity:
        rows = []
        for k, delta in enumerate(cfg.delta_ladder):
            cell = cells[(k, nmax)]
            if (k, nmax) not in flows:
                continue
            try:
                cur = lr_curve(flows[(k, nmax)], dg.reg_r, dg.reg_q, dt=cfg.dt)
            except MvlabError as exc:
                rows.append(_row(cfg, cell, t="", mean_norm="", q=dg.reg_q, r=dg.reg_r, w=0.0,
                                 fit_c="", fit_gamma="", dominated="", note=str(exc)))
                continue
            for t, v in zip(cur.times, cur.values):
                rows.append(_row(cfg, cell, t=float(t), mean_norm=float(v), q=dg.reg_q,
                                 r=dg.reg_r, w=0.0, fit_c=cur.fit_c, fit_gamma=cur.fit_gamma,
                                 dominated=int(cur.dominated), note=""))
        if rows:
            tables[f"regularity_{cfg.name}_n{nmax}"] = rows

    if dg.distances:
        rows = []
        for k, delta in enumerate(cfg.delta_ladder):
            for n1, n2 in zip(cfg.n_ladder, cfg.n_ladder[1:]):
                if (k, n1) in flows and (k, n2) in flows:
                    r = flow_distance(flows[(k, n1)], flows[(k, n2)], dg.dist_p, dg.dist_xi)
                    rows.append({"scenario": cfg.name, "kind": "omega_n", "n": n2, "n_prev": n1,
                                 "k": k, "k_prev": k, "reps": cfg.replications,
                                 "seed": cfg.seed, "p": dg.dist_p, "xi": dg.dist_xi,
                                 "t0": "", "value": r.value})
        for k in range(1, len(cfg.delta_ladder)):
            if (k - 1, nmax) in flows and (k, nmax) in flows:
                r = flow_distance(flows[(k - 1, nmax)], flows[(k, nmax)], 1.0, dg.sup_xi,
                                  mode="sup_compact", t0=dg.t0)
                rows.append({"scenario": cfg.name, "kind": "sup_compact_delta", "n": nmax,
                             "n_prev": nmax, "k": k, "k_prev": k - 1,
                             "reps": cfg.replications, "seed": cfg.seed, "p": "",
                             "xi": dg.sup_xi, "t0": dg.t0, "value": r.value})
        if rows:
            tables[f"distances_{cfg.name}"] = rows

    prov = {"config_sha256": cfg.digest(), "seed": cfg.seed, "version": __version__,
            "bandwidth": bw, "header": HEADER,
            "cells": [{"n": c.n, "k": c.k, "delta": c.delta, "status": c.status,
                       "error": c.error} for c in cells.values()]}
    return StudyReport(cfg, cells, tables, prov)
