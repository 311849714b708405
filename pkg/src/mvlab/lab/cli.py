"""Command line: ``mvlab run|validate|report``.

Exit codes: 0 success, 1 config error, 2 every cell failed, 3 some cells failed.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from mvlab.errors import ConfigError

log = logging.getLogger("mvlab")

EXIT_OK, EXIT_CONFIG, EXIT_ALL_FAILED, EXIT_PARTIAL = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mvlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the two-step study for a config")
    run.add_argument("config", type=Path)
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--jobs", type=int, default=1, help="worker processes")
    run.add_argument("--out", type=Path, default=None, help="output directory")
    run.add_argument("--formats", default="csv,json,svg",
                     help="comma-separated subset of csv,json,svg")
    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config", type=Path)
    val.add_argument("--seed", type=int, default=None)
    rep = sub.add_parser("report", help="re-emit tables and plots from a manifest")
    rep.add_argument("manifest", type=Path, help="manifest.json or its directory")
    rep.add_argument("--out", type=Path, default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    from mvlab.lab.config import load_config

    if args.command == "report":
        from mvlab.lab.output import reemit_from_manifest
        path = args.manifest / "manifest.json" if args.manifest.is_dir() else args.manifest
        try:
            files = reemit_from_manifest(path, args.out)
        except (OSError, ValueError, KeyError) as exc:
            print(f"error: cannot re-emit from {path}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        for f in files:
            print(f)
        return EXIT_OK

    try:
        cfg = load_config(args.config).with_overrides(
            seed=args.seed, out=str(args.out) if getattr(args, "out", None) else None)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print(f"ok: {cfg.name} ({len(cfg.n_ladder)} x {len(cfg.delta_ladder)} cells, "
              f"sha256 {cfg.digest()[:12]})")
        return EXIT_OK

    from mvlab.lab.output import emit_outputs
    from mvlab.lab.study import run_two_step_study

    formats = [f.strip() for f in args.formats.split(",") if f.strip()]
    report = run_two_step_study(cfg, jobs=max(1, args.jobs))
    try:
        files = emit_outputs(report, cfg.out, formats)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for f in files:
        log.info("wrote %s", f)
    for c in report.provenance["cells"]:
        if c["status"] != "ok":
            print(f"cell n={c['n']} k={c['k']} failed: {c['error']}", file=sys.stderr)
    total = len(report.cells)
    if report.failures == total:
        return EXIT_ALL_FAILED
    if report.failures:
        return EXIT_PARTIAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
