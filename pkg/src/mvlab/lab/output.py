"""Writing study reports: CSV tables, a JSON manifest, raw paths and SVG plots.

All files are deterministic functions of the report (no timestamps), and
floats are written with ``repr`` so values round-trip exactly.
"""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from mvlab.lab.study import StudyReport

FORMATS = ("csv", "json", "svg")


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _columns(rows: list[dict]) -> list[str]:
    cols = []
    for r in rows:
        for c in r:
            if c not in cols:
                cols.append(c)
    return cols


def _csv_text(rows: list[dict]) -> str:
    cols = _columns(rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_cell(r.get(c, "")) for c in cols])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if hasattr(v, "item"):
        return _jsonable(v.item())
    return v


def _table_json(rows: list[dict]) -> dict:
    cols = _columns(rows)
    return {"columns": cols,
            "rows": [[_jsonable(r.get(c, "")) for c in cols] for r in rows]}


def _table_rows(table: dict) -> list[dict]:
    return [dict(zip(table["columns"], r)) for r in table["rows"]]


def raw_paths_csv(report: StudyReport, cell) -> str:
    flow = cell.flow
    R, J, n, d = flow.positions.shape
    n = min(n, report.config.diagnostics.raw_particles)
    buf = io.StringIO()
    buf.write("rep_id,t,particle_id," + ",".join(f"x_{a + 1}" for a in range(d)) + "\n")
    for r in range(R):
        for j in range(J):
            t = repr(float(flow.times[j]))
            for i in range(n):
                xs = ",".join(repr(float(v)) for v in flow.positions[r, j, i])
                buf.write(f"{int(flow.rep_ids[r])},{t},{i},{xs}\n")
    return buf.getvalue()


def common_noise_csv(cell) -> str:
    flow = cell.flow
    R, J, m = flow.common.shape
    buf = io.StringIO()
    buf.write("rep_id,t," + ",".join(f"z_{a + 1}" for a in range(m)) + "\n")
    for r in range(R):
        for j in range(J):
            zs = ",".join(repr(float(v)) for v in flow.common[r, j])
            buf.write(f"{int(flow.rep_ids[r])},{float(flow.times[j])!r},{zs}\n")
    return buf.getvalue()


def line_plot_svg(series: dict[str, list[tuple[float, float]]], title: str,
                  xlabel: str, ylabel: str, width: int = 480, height: int = 320) -> str:
    """A plain SVG line plot; the axis ranges are recorded as data attributes."""
    pts = [p for s in series.values() for p in s]
    xs = [p[0] for p in pts] or [0.0, 1.0]
    ys = [p[1] for p in pts] or [0.0, 1.0]
    xmin, xmax, ymin, ymax = min(xs), max(xs), min(ys), max(ys)
    xspan = xmax - xmin or 1.0
    yspan = ymax - ymin or 1.0
    ml, mr, mt, mb = 60, 20, 30, 40
    pw, ph = width - ml - mr, height - mt - mb

    def sx(x):
        return ml + (x - xmin) / xspan * pw

    def sy(y):
        return mt + ph - (y - ymin) / yspan * ph

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'data-xmin="{xmin!r}" data-xmax="{xmax!r}" data-ymin="{ymin!r}" '
           f'data-ymax="{ymax!r}">',
           f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="13">{title}</text>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
           f'<text x="{ml}" y="{height - 8}" font-size="10">{xmin:.4g}</text>',
           f'<text x="{ml + pw}" y="{height - 8}" font-size="10" text-anchor="end">'
           f'{xmax:.4g}</text>',
           f'<text x="4" y="{mt + ph}" font-size="10">{ymin:.4g}</text>',
           f'<text x="4" y="{mt + 10}" font-size="10">{ymax:.4g}</text>',
           f'<text x="{ml + pw / 2}" y="{height - 8}" font-size="11" '
           f'text-anchor="middle">{xlabel}</text>',
           f'<text x="12" y="{mt + ph / 2}" font-size="11" '
           f'transform="rotate(-90 12 {mt + ph / 2})" text-anchor="middle">{ylabel}</text>']
    for i, (name, s) in enumerate(series.items()):
        c = colors[i % len(colors)]
        path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in s)
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{path}"/>')
        out.append(f'<text x="{ml + 8}" y="{mt + 14 + 13 * i}" font-size="10" '
                   f'fill="{c}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _regularity_svgs(name: str, rows: list[dict]) -> dict[str, str]:
    series: dict = {}
    for r in rows:
        if r.get("t") == "":
            continue
        series.setdefault(f"k={r['k']} delta={r['delta']}", []).append(
            (float(r["t"]), float(r["mean_norm"])))
    if not series:
        return {}
    return {f"{name}.svg": line_plot_svg(series, name, "t", "norm")}


def _distance_svgs(name: str, rows: list[dict]) -> dict[str, str]:
    series: dict = {}
    for r in rows:
        if r["kind"] == "omega_n":
            series.setdefault(f"omega k={r['k']}", []).append((float(r["n"]), float(r["value"])))
        else:
            series.setdefault("sup_compact over k", []).append(
                (float(r["k"]), float(r["value"])))
    return {f"{name}.svg": line_plot_svg(series, name, "n or k", "distance")} if series else {}


def render(report: StudyReport, formats=FORMATS) -> dict[str, str]:
    """File name -> text for every output (nothing written yet)."""
    formats = set(formats)
    unknown = formats - set(FORMATS)
    if unknown:
        raise ValueError(f"unknown output formats {sorted(unknown)}")
    cfg = report.config
    files: dict[str, str] = {}
    if "csv" in formats:
        for name, rows in report.tables.items():
            if rows:
                files[f"{name}.csv"] = _csv_text(rows)
        for cell in report.cells.values():
            if cell.status != "ok":
                continue
            tag = f"{cfg.name}_n{cell.n}_k{cell.k}"
            if cfg.diagnostics.export_raw:
                files[f"raw_{tag}.csv"] = raw_paths_csv(report, cell)
            if cfg.diagnostics.common_noise:
                files[f"common_{tag}.csv"] = common_noise_csv(cell)
    if "svg" in formats and cfg.diagnostics.svg:
        for name, rows in report.tables.items():
            if name.startswith("regularity_"):
                files.update(_regularity_svgs(name, rows))
            elif name.startswith("distances_"):
                files.update(_distance_svgs(name, rows))
    if "json" in formats:
        manifest = {
            "scenario": cfg.name,
            # the output directory is left out so re-runs elsewhere match byte for byte
            "config": {k: v for k, v in cfg.to_dict().items() if k != "out"},
            "provenance": report.provenance,
            "files": sorted(files),
            "tables": {k: _table_json(rows) for k, rows in report.tables.items()},
        }
        files["manifest.json"] = json.dumps(manifest, indent=1, sort_keys=True) + "\n"
    return files


def emit_outputs(report: StudyReport, out_dir=None, formats=FORMATS) -> list[Path]:
    out = Path(out_dir or report.config.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in render(report, formats).items():
        p = out / name
        p.write_text(text)
        written.append(p)
    return written


def reemit_from_manifest(manifest_path, out_dir=None, formats=("csv", "svg")) -> list[Path]:
    """Rewrite table CSVs and SVGs from a stored manifest (raw paths are not stored)."""
    manifest_path = Path(manifest_path)
    data = json.loads(manifest_path.read_text())
    out = Path(out_dir or manifest_path.parent)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, table in data["tables"].items():
        rows = _table_rows(table)
        if "csv" in formats and rows:
            p = out / f"{name}.csv"
            p.write_text(_csv_text(rows))
            written.append(p)
        if "svg" in formats and data["config"]["diagnostics"].get("svg", True):
            svgs = _regularity_svgs(name, rows) if name.startswith("regularity_") else \
                _distance_svgs(name, rows) if name.startswith("distances_") else {}
            for fname, text in svgs.items():
                p = out / fname
                p.write_text(text)
                written.append(p)
    return written
